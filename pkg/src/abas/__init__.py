"""Analysis-by-adversarial-synthesis vocoder toolkit.

Submodules: dsp (LPC analysis/synthesis and cross synthesis), autodiff
(reverse-mode engine over channels-by-length arrays), nn (gated convolutions,
spectral normalization, init), model (generator cascade and discriminator),
train (losses, AMSGrad, the adversarial loop, checkpoints, corpora), metrics
(SSNR / L1 / LSD), wavio (PCM16 WAV), cli (command-line surface).
"""

from . import autodiff, dsp, metrics, model, nn, train, verify, wavio

__all__ = ["autodiff", "dsp", "metrics", "model", "nn", "train", "verify", "wavio"]
__version__ = "0.1.0"
