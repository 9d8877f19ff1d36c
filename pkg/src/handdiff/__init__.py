"""handdiff: an all-in-one graph diffusion toolkit for hand meshes.

A single x0-predicting graph denoiser over a self-contained synthetic hand
rig covers unconditional generation, mesh/skeleton inpainting, single- and
multi-hypothesis image reconstruction and 2D-skeleton fitting, steered by
maskable multimodal conditions and condition-aligned gradient guidance.
"""

__version__ = "0.1.0"
