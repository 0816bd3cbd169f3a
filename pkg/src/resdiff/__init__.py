"""Multi-rate block-transform codec with diffusion-based residual enhancement.

The toolkit has three parts that plug together:

* ``resdiff.codec`` -- a self-contained lossy image codec (8x8 block DCT,
  rate-scaled scalar quantization, adaptive range coding) with a bit-exact
  file format.
* ``resdiff.schedule`` / ``resdiff.diffusion`` / ``resdiff.nn`` -- the
  diffusion machinery: noise schedules, forward/posterior/DDIM math and a
  small trainable conditional denoiser over codec residuals.
* ``resdiff.sampler`` / ``resdiff.analysis`` -- receiver-side iterative
  enhancement with early stopping, late start and rate-dependent
  thresholding, plus the metrics used to study the fidelity/realism
  traversal.

See the command line interface in ``resdiff.cli`` for end-to-end usage.
"""

__version__ = "0.1.0"
