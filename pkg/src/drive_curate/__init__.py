"""Object-centric view curation from driving logs, with a toy diffusion harness.

Core pieces: orbital pose geometry and rotational homographies
(:mod:`geometry`), crops and warps (:mod:`imaging`), pose and Plücker-ray
conditioning (:mod:`conditioning`), occlusion trimaps (:mod:`occlusion`),
the curation pipeline (:mod:`curation`), a desk-scale latent denoiser
(:mod:`toydiff`) and masked image metrics (:mod:`evalmetrics`).
"""

__version__ = "0.1.0"
