"""Contact-condition-guided diffusion for vision-based tactile sensor images.

Subpackages follow the pipeline: ``rigsim`` synthesizes paired datasets,
``dataset`` defines the on-disk format, ``conditioning`` builds the
4-channel condition tensor from an object image and a six-axis force,
``diffusion`` (with ``unet``/``nn``) trains and samples the generative
model, and ``metrics`` evaluates generated against real images. ``cli``
ties everything together behind the ``tactgen`` command.
"""

__version__ = "0.1.0"
