"""Monte Carlo and quadrature experiments on majorisation of random spectra."""
