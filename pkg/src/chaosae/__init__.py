"""Sparse-autoencoder compression of chaotic time series.

The toolkit integrates three chaotic systems, trains L1-regularized
autoencoders on windowed scalar series from them, measures how many latent
nodes stay active as the regularization strength and window size vary, and
validates reconstructed dynamics by comparing largest Lyapunov exponents
against the source systems.
"""

__version__ = "0.1.0"
