"""Network-assisted latent-space search for master samples."""
