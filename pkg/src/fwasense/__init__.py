"""Cooperative UAV detection and localization from uplink CSI of BS-CPE links.

The package is organized as a numpy library:

- ``scenario``     scene geometry, array/OFDM configuration, pair indexing
- ``channel``      geometric multipath model, CFR synthesis, dataset files
- ``dsp``          CFR -> normalized angle-delay maps
- ``tensornet``    minimal reverse-mode autodiff core and NN layers
- ``detection``    per-pair embeddings + gated-attention MIL detector
- ``selection``    attention-guided pair selection for localization
- ``localization`` per-pair locator, Transformer fusion, fusion baselines
- ``metrics``      MDP/FAP, APE statistics, sensing-region maps
- ``cli``          command-line pipeline with reproducible run manifests
"""

__version__ = "0.1.0"
