"""Kernel backends. Import `gdnn.backend` to select one; do not import
`jit` or `reference` directly unless you want a specific implementation."""
