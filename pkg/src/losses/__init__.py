# src/losses — Supervised and information-maximization objectives
# Contains: cross-entropy, certainty (entropy), diversity, IM composition
