//! Site-tensor extraction and transfer-channel expectation values.
