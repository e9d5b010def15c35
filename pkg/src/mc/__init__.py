"""Monte Carlo oracle for terminal samples and tail rates."""
