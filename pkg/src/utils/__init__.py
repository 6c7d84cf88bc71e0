# src/utils — Shared Utilities
# Contains: Settings loader, Logger, Error types, Seed derivation
