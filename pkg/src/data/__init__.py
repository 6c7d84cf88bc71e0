# src/data — Synthetic domains and episodes
# Handles: Domain pair generation → Episode sampling → Jitter → CSV export
