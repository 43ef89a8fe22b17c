"""Stand-alone engine processes speaking the line-delimited JSON contract."""
