//! Lindblad dissipators and the discretized noisy site channel.
