//! Variational ground-state search over drive waveforms.
