"""Named finite-difference checks covering the whole differentiable op set and
every loss, at fixed seeds. The CLI's gradcheck command and the test suite both
run these closures.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ParameterError
from .losses import STFTParams, kd_loss, l1_freq, l1_wav


def _rng(tag: str) -> np.random.Generator:
    return np.random.default_rng(abs(hash_tag(tag)) % (2**32))


def hash_tag(tag: str) -> int:
    # tiny stable string hash; avoids the salted builtin
    value = 0
    for ch in tag:
        value = (value * 131 + ord(ch)) % (2**31)
    return value


def _separated_pair(rng, shape, gap: float = 0.15):
    """Two arrays whose elementwise difference stays away from the |.| kink."""
    a = rng.standard_normal(shape)
    step = np.sign(rng.standard_normal(shape))
    step[step == 0] = 1.0
    b = a + step * (gap + np.abs(rng.standard_normal(shape)) * 0.5)
    return a, b


def _check_add():
    rng = _rng("add")
    return (lambda a, b: T.add(a, b)), [rng.standard_normal((3, 4)), rng.standard_normal((3, 4))]


def _check_mul():
    rng = _rng("mul")
    return (lambda a, b: T.mul(a, b)), [rng.standard_normal((3, 4)), rng.standard_normal((3, 4))]


def _check_scale_add():
    rng = _rng("scale_add")
    return (lambda a, b: T.scale_add(0.7, a, -1.3, b)), [rng.standard_normal((2, 5)),
                                                         rng.standard_normal((2, 5))]


def _check_linear():
    rng = _rng("linear")
    return (lambda x, w, b: T.linear(x, w, b)), [rng.standard_normal((4, 3)),
                                                 rng.standard_normal((3, 5)),
                                                 rng.standard_normal(5)]


def _check_conv1d():
    rng = _rng("conv1d")
    return (lambda x, k: T.conv1d(x, k, stride=2)), [rng.standard_normal((9, 2)),
                                                     rng.standard_normal((3, 2, 4))]


def _check_conv1d_transposed():
    rng = _rng("deconv")
    return (lambda x, k: T.conv1d_transposed(x, k, stride=2)), [rng.standard_normal((4, 3)),
                                                                rng.standard_normal((4, 3, 2))]


def _check_gelu():
    rng = _rng("gelu")
    return (lambda x: T.gelu(x)), [rng.standard_normal((3, 4))]


def _check_sigmoid():
    rng = _rng("sigmoid")
    return (lambda x: T.sigmoid(x)), [rng.standard_normal((3, 4))]


def _check_tanh():
    rng = _rng("tanh")
    return (lambda x: T.tanh(x)), [rng.standard_normal((3, 4))]


def _check_log():
    rng = _rng("log")
    return (lambda x: T.log(x)), [0.5 + np.abs(rng.standard_normal((3, 4)))]


def _check_mean():
    rng = _rng("mean")
    return (lambda x: T.mean(x)), [rng.standard_normal((4, 5))]


def _check_sum_all():
    rng = _rng("sum")
    return (lambda x: T.sum_all(x)), [rng.standard_normal((4, 5))]


def _check_narrow():
    rng = _rng("narrow")
    return (lambda x: T.narrow(x, 1, 1, 2)), [rng.standard_normal((3, 5))]


def _check_concat():
    rng = _rng("concat")
    return (lambda a, b: T.concat([a, b], axis=0)), [rng.standard_normal((2, 3)),
                                                     rng.standard_normal((4, 3))]


def _check_reshape():
    rng = _rng("reshape")
    return (lambda x: T.reshape(x, (6, 2))), [rng.standard_normal((3, 4))]


def _check_l1_distance():
    a, b = _separated_pair(_rng("l1"), (4, 3))
    return (lambda x, y: T.l1_distance(x, y)), [a, b]


def _check_cosine_sim_rows():
    rng = _rng("cosine")
    return (lambda a, b: T.cosine_sim_rows(a, b)), [1.0 + 0.5 * rng.standard_normal((3, 4)),
                                                    1.0 + 0.5 * rng.standard_normal((3, 4))]


def _check_stft_mag():
    rng = _rng("stft")
    window = T.hann_window(8)
    return (lambda x: T.stft_mag(x, window, hop=4, fft_size=16)), [rng.standard_normal(24)]


def _bidir_inputs(cell: str):
    rng = _rng("bidir_" + cell)
    gates = 4 if cell == "lstm" else 3
    hidden = 2
    x = rng.standard_normal((5, 3))
    arrays = [x]
    for _ in range(2):  # forward then backward direction
        arrays.append(rng.standard_normal((3, gates * hidden)) * 0.5)
        arrays.append(rng.standard_normal((hidden, gates * hidden)) * 0.5)
        arrays.append(rng.standard_normal(gates * hidden) * 0.1)

    def fn(xt, fwx, fwh, fb, bwx, bwh, bb):
        params = T.BiRecurrentParams(forward=T.RecurrentParams(fwx, fwh, fb),
                                     backward=T.RecurrentParams(bwx, bwh, bb),
                                     hidden=hidden, cell=cell)
        return T.bidir_recurrent(xt, params)

    return fn, arrays


def _check_bidir_lstm():
    return _bidir_inputs("lstm")


def _check_bidir_gru():
    return _bidir_inputs("gru")


def _check_composition():
    rng = _rng("composition")

    def fn(x, k, w, b):
        return T.linear(T.gelu(T.conv1d(x, k, stride=1)), w, b)

    return fn, [rng.standard_normal((6, 2)), rng.standard_normal((3, 2, 3)),
                rng.standard_normal((3, 4)), rng.standard_normal(4)]


def _check_kd_loss():
    rng = _rng("kd")
    student = rng.standard_normal((3, 4))
    teacher = {7: student + np.sign(rng.standard_normal((3, 4))) * 0.2
               + 0.3 * rng.standard_normal((3, 4))}
    # keep the pair off the elementwise |.| kink
    diff = teacher[7] - student
    teacher[7] = np.where(np.abs(diff) < 0.1, student + 0.15 * np.sign(diff + 0.5), teacher[7])
    return (lambda s: kd_loss(teacher, {7: s}, layers=(7,))), [student]


def _check_l1_wav():
    a, b = _separated_pair(_rng("l1wav"), (40,))
    return (lambda x, y: l1_wav(x, y)), [a, b]


def _check_l1_freq():
    rng = _rng("l1freq")
    n = 24
    params = STFTParams(window_length=8, hop=4, fft_size=16)
    clean = np.sin(2 * np.pi * 3 * np.arange(n) / n) + 0.2 * rng.standard_normal(n)
    enhanced = 2.5 * clean + rng.standard_normal(n)
    return (lambda x, y: l1_freq(x, y, params)), [enhanced, clean]


def _check_encoder_head():
    rng = _rng("encoder_head")
    stride, dim, hidden = 8, 3, 6
    x_const = rng.standard_normal(16)

    def fn(kernel, w1, b1, w2, b2, hw, hb):
        x = T.Tensor(x_const.reshape(-1, 1))
        h = T.gelu(T.conv1d(x, kernel, stride=stride))
        h = T.add(h, T.linear(T.gelu(T.linear(h, w1, b1)), w2, b2))
        return T.linear(h, hw, hb)

    return fn, [rng.standard_normal((stride, 1, dim)) * 0.5,
                rng.standard_normal((dim, hidden)) * 0.5, rng.standard_normal(hidden) * 0.1,
                rng.standard_normal((hidden, dim)) * 0.5, rng.standard_normal(dim) * 0.1,
                rng.standard_normal((dim, dim)) * 0.5, rng.standard_normal(dim) * 0.1]


CHECKS = {
    "add": _check_add,
    "mul": _check_mul,
    "scale_add": _check_scale_add,
    "linear": _check_linear,
    "conv1d": _check_conv1d,
    "conv1d_transposed": _check_conv1d_transposed,
    "gelu": _check_gelu,
    "sigmoid": _check_sigmoid,
    "tanh": _check_tanh,
    "log": _check_log,
    "mean": _check_mean,
    "sum_all": _check_sum_all,
    "narrow": _check_narrow,
    "concat": _check_concat,
    "reshape": _check_reshape,
    "l1_distance": _check_l1_distance,
    "cosine_sim_rows": _check_cosine_sim_rows,
    "stft_mag": _check_stft_mag,
    "bidir_lstm": _check_bidir_lstm,
    "bidir_gru": _check_bidir_gru,
    "composition_conv_gelu_linear": _check_composition,
    "kd_loss": _check_kd_loss,
    "l1_wav": _check_l1_wav,
    "l1_freq": _check_l1_freq,
    "encoder_head": _check_encoder_head,
}


def run_suite(names=None, perturb: str | None = None, tolerance: float = 1e-4):
    """Run the named checks (all by default); returns [(name, GradcheckReport)].

    `perturb` breaks the named check's closure with a term the graph cannot
    see, as a negative control of the comparison machinery itself.
    """
    selected = list(CHECKS) if names is None else list(names)
    results = []
    for name in selected:
        if name not in CHECKS:
            raise ParameterError(f"unknown gradcheck {name!r}; known: {sorted(CHECKS)}")
        fn, inputs = CHECKS[name]()
        if perturb == name:
            fn = _perturbed(fn)
        results.append((name, T.gradcheck(fn, inputs, tolerance=tolerance)))
    return results


def _perturbed(fn):
    def wrapped(*inputs):
        # constant leaf recomputed per evaluation: finite differences see it,
        # backward does not, so the check must fail
        hidden = T.Tensor(np.asarray(np.sum(inputs[0].values)))
        return T.add(fn(*inputs), T.scale(hidden, 1.0))

    return wrapped
