"""Physics and data engines, one module per concern."""
