"""Model package — Domain types and pure model evaluation for MixIRT."""
