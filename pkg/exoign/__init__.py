"""exoign CLI package."""
