"""Finite-difference verification of every differentiable op and composite.

Shared by the test suite and the grad-check command. All checks run in
float64 at small shapes; each entry rebuilds its forward pass from frozen
random inputs so central differences are exact to O(eps^2).
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Parameter, Tape
from .model import (
    Discriminator,
    DiscriminatorConfig,
    Generator,
    GeneratorConfig,
    NoiseBundle,
)

TOLERANCE = 1e-5


def _loss_of(t):
    return ad.abs_mean_(t)


def _op_checks(seed: int):
    rng = np.random.default_rng(seed)
    x20 = rng.normal(size=(3, 20))
    x16 = rng.normal(size=(4, 16))

    checks = []

    def add_check(name, make):
        checks.append((name, make))

    w = Parameter("w", rng.normal(size=(5, 3, 4)))
    b = Parameter("b", rng.normal(size=5))

    def conv_zero():
        tape = Tape()
        return tape, _loss_of(ad.conv1d(tape.tensor(x20), w, b, stride=2, pad=(3, 3)))

    add_check("conv1d[zero pad, stride 2]", (conv_zero, [w, b]))

    w2 = Parameter("w2", rng.normal(size=(2, 3, 5)))
    b2 = Parameter("b2", rng.normal(size=2))

    def conv_reflect():
        tape = Tape()
        return tape, _loss_of(
            ad.conv1d(tape.tensor(x20), w2, b2, stride=1, pad=(2, 2), pad_mode="reflect")
        )

    add_check("conv1d[reflect pad, stride 1]", (conv_reflect, [w2, b2]))

    wt = Parameter("wt", rng.normal(size=(3, 2, 6)))
    bt = Parameter("bt", rng.normal(size=2))

    def tconv():
        tape = Tape()
        return tape, _loss_of(ad.tconv1d(tape.tensor(x20), wt, bt, stride=2, crop=(2, 2)))

    add_check("tconv1d[stride 2, crop]", (tconv, [wt, bt]))

    win = Parameter("win", rng.normal(size=(3, 20)))

    def refl():
        tape = Tape()
        return tape, _loss_of(ad.tanh_(ad.reflect_pad(tape.leaf(win), 4, 4)))

    add_check("reflect_pad", (refl, [win]))

    def softmax():
        tape = Tape()
        return tape, _loss_of(ad.mul_(ad.channel_softmax(tape.leaf(win)), tape.tensor(x20)))

    add_check("channel_softmax", (softmax, [win]))

    slope = Parameter("slope", np.asarray(0.3))
    single = {
        "tanh": lambda t: ad.tanh_(t),
        "sigmoid": lambda t: ad.sigmoid_(t),
        "prelu": lambda t: ad.prelu_(t, slope),
        "leaky_relu": lambda t: ad.leaky_relu_(t, 0.2),
        "scale": lambda t: ad.scale_(t, -1.7),
        "shift": lambda t: ad.shift_(t, 0.9),
        "abs_mean": lambda t: t,  # the loss itself exercises abs_mean
        "mean": lambda t: ad.shift_(ad.mean_(t), 1.0),
    }
    for name, fn in single.items():
        def make(fn=fn):
            tape = Tape()
            return tape, _loss_of(fn(tape.leaf(win)))
        add_check(name, (make, [win, slope] if name == "prelu" else [win]))

    win2 = Parameter("win2", rng.normal(size=(3, 20)))
    binary = {
        "mul": ad.mul_,
        "add": ad.add_,
        "sub": ad.sub_,
        "concat_channels": ad.concat_channels_,
    }
    for name, fn in binary.items():
        def make(fn=fn):
            tape = Tape()
            return tape, _loss_of(ad.tanh_(fn(tape.leaf(win), tape.leaf(win2))))
        add_check(name, (make, [win, win2]))

    for gate in ("softmax_channel", "sigmoid"):
        layer = nn.GatedConvLayer(
            np.random.default_rng(seed + 1), f"gc_{gate}", 4, 3, 5, gate, True, np.float64
        )

        def make(layer=layer):
            tape = Tape()
            return tape, _loss_of(layer(tape.tensor(x16)))

        add_check(f"gated_conv[{gate}]", (make, layer.parameters()))

    sn_conv = nn.Conv1d(
        np.random.default_rng(seed + 2), "snc", 4, 3, 4, 2, (1, 1), "zero", True, np.float64
    )

    def make_sn():
        tape = Tape()
        return tape, _loss_of(sn_conv(tape.tensor(x16)))

    add_check("spectral_normalized_conv", (make_sn, sn_conv.parameters()))

    sn_tconv = nn.TConv1d(np.random.default_rng(seed + 3), "snt", 4, 3, 6, 2, (2, 2), True, np.float64)

    def make_snt():
        tape = Tape()
        return tape, _loss_of(sn_tconv(tape.tensor(x16)))

    add_check("spectral_normalized_tconv", (make_snt, sn_tconv.parameters()))
    return checks


def _model_checks(seed: int):
    cfg = GeneratorConfig.tiny()
    G = Generator(cfg, np.random.default_rng(seed + 10), np.float64)
    D = Discriminator(DiscriminatorConfig.tiny(), np.random.default_rng(seed + 11), np.float64)
    rng = np.random.default_rng(seed + 12)
    L = 64
    r = rng.normal(size=(1, L))
    x = rng.normal(size=(1, L))
    z = NoiseBundle(rng.normal(size=(cfg.noise_channels, L // cfg.compression)))

    def gen_cascade():
        tape = Tape()
        fake = G.generate(tape.tensor(r), z)
        return tape, ad.abs_mean_(ad.sub_(fake, tape.tensor(x)))

    def disc():
        tape = Tape()
        score = D.discriminate(tape.tensor(x), tape.tensor(r))
        return tape, ad.abs_mean_(score)

    def end_to_end():
        tape = Tape()
        fake = G.generate(tape.tensor(r), z)
        score = D.discriminate(fake, tape.tensor(r))
        l1 = ad.abs_mean_(ad.sub_(fake, tape.tensor(x)))
        return tape, ad.add_(ad.scale_(l1, 0.5), ad.scale_(score, -0.5))

    return [
        ("generator_cascade[L=64]", (gen_cascade, G.parameters())),
        ("discriminator[tiny]", (disc, D.parameters())),
        ("generator+discriminator", (end_to_end, G.parameters() + D.parameters())),
    ]


def gradient_suite(scope: str = "model", seed: int = 0, coords_per_param: int = 3):
    """Run every check; returns a list of (op name, max relative error)."""
    checks = _op_checks(seed)
    if scope == "model":
        checks += _model_checks(seed)
    results = []
    for name, (make, params) in checks:
        err = ad.grad_check(make, params, coords_per_param=coords_per_param, seed=seed)
        results.append((name, err))
    return results
