"""hamexpand: small-noise and tail expansions of projected diffusions."""
