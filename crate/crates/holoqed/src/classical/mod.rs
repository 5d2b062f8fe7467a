//! Classical reference machinery: exact diagonalization, DMRG, embeddings.
