"""Engine package — Gibbs blocks, chain driver, worker pool and progress reporting."""
