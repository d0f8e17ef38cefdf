"""Neural networks: per-frame sketching, temporal correction, objectives."""
