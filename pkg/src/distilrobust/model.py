"""Frozen toy teacher, compact student with per-layer prediction heads, and a
waveform-reconstruction head (bidirectional recurrence + seven transposed
convolutions, each followed by GELU).

The teacher is a seeded random-weight network that stands in for a large
pretrained encoder: 12 residual mixing blocks over strided-conv frames. The
student shares the same geometry at reduced depth and is initialized by
copying the teacher's front-end and first blocks.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .audio import Waveform
from .errors import ConfigError, ShapeError

DEFAULT_DIM = 32
DEFAULT_TEACHER_LAYERS = 12
DEFAULT_STUDENT_LAYERS = 2
DEFAULT_FRAME_STRIDE = 320
DEFAULT_DISTILL_LAYERS = (4, 8, 12)
DEFAULT_DECONV_STRIDES = (2, 2, 2, 2, 2, 2, 5)
N_DECONV_LAYERS = 7


def _init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    return rng.standard_normal(shape) / math.sqrt(fan_in)


def parameter_checksum(params: dict[str, T.Tensor]) -> str:
    """Order-independent digest of named parameters (names + raw values)."""
    h = hashlib.sha256()
    for name in sorted(params):
        h.update(name.encode("utf-8"))
        h.update(b"\x00")
        h.update(np.ascontiguousarray(params[name].values).tobytes())
    return h.hexdigest()


def encoder_forward(samples: np.ndarray, params: dict[str, T.Tensor], prefix: str,
                    n_blocks: int, frame_stride: int) -> list[T.Tensor]:
    """Front-end conv + GELU, then residual mixing blocks; returns every block output."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise ShapeError(f"encoder input must be 1-D, got shape {samples.shape}")
    if samples.size < frame_stride:
        raise ShapeError(f"input of {samples.size} samples is shorter than one "
                         f"frame of {frame_stride}")
    x = T.Tensor(samples.reshape(-1, 1))
    h = T.gelu(T.conv1d(x, params[prefix + "frontend.kernel"], stride=frame_stride))
    outputs: list[T.Tensor] = []
    for k in range(1, n_blocks + 1):
        inner = T.gelu(T.linear(h, params[f"{prefix}block{k}.w1"], params[f"{prefix}block{k}.b1"]))
        delta = T.linear(inner, params[f"{prefix}block{k}.w2"], params[f"{prefix}block{k}.b2"])
        h = T.add(h, delta)
        outputs.append(h)
    return outputs


class TeacherSurrogate:
    """Frozen, seeded feature extractor with one (T, D) map per layer."""

    def __init__(self, n_layers: int = DEFAULT_TEACHER_LAYERS, dim: int = DEFAULT_DIM,
                 frame_stride: int = DEFAULT_FRAME_STRIDE, hidden_multiplier: int = 2,
                 seed: int = 0):
        if n_layers < 1:
            raise ConfigError(f"teacher needs at least one layer, got {n_layers}")
        if dim < 1 or frame_stride < 1 or hidden_multiplier < 1:
            raise ConfigError("dim, frame_stride, and hidden_multiplier must be positive")
        self.n_layers = n_layers
        self.dim = dim
        self.frame_stride = frame_stride
        self.hidden_multiplier = hidden_multiplier
        self.seed = seed
        rng = np.random.default_rng(seed)
        hidden = dim * hidden_multiplier
        arrays: dict[str, np.ndarray] = {
            "frontend.kernel": _init(rng, (frame_stride, 1, dim), frame_stride),
        }
        for k in range(1, n_layers + 1):
            arrays[f"block{k}.w1"] = _init(rng, (dim, hidden), dim)
            arrays[f"block{k}.b1"] = np.zeros(hidden)
            arrays[f"block{k}.w2"] = _init(rng, (hidden, dim), hidden)
            arrays[f"block{k}.b2"] = np.zeros(dim)
        for arr in arrays.values():
            arr.setflags(write=False)
        self.params: dict[str, T.Tensor] = {name: T.Tensor(arr) for name, arr in arrays.items()}

    def checksum(self) -> str:
        return parameter_checksum(self.params)


def teacher_forward(teacher: TeacherSurrogate, w: Waveform) -> dict[int, np.ndarray]:
    """Layer index (1-based) -> frozen (T, D) feature map for the clean input."""
    outputs = encoder_forward(w.samples, teacher.params, "", teacher.n_layers,
                              teacher.frame_stride)
    return {k + 1: out.values for k, out in enumerate(outputs)}


@dataclass(frozen=True)
class StudentConfig:
    dim: int = DEFAULT_DIM
    n_student_layers: int = DEFAULT_STUDENT_LAYERS
    frame_stride: int = DEFAULT_FRAME_STRIDE
    hidden_multiplier: int = 2
    distill_layers: tuple[int, ...] = DEFAULT_DISTILL_LAYERS
    enhancement: bool = False
    enh_hidden: int | None = None  # None: same as dim
    cell_type: str = "lstm"
    deconv_strides: tuple[int, ...] = DEFAULT_DECONV_STRIDES

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "n_student_layers": self.n_student_layers,
            "frame_stride": self.frame_stride,
            "hidden_multiplier": self.hidden_multiplier,
            "distill_layers": list(self.distill_layers),
            "enhancement": self.enhancement,
            "enh_hidden": self.enh_hidden,
            "cell_type": self.cell_type,
            "deconv_strides": list(self.deconv_strides),
        }

    @classmethod
    def from_dict(cls, record: dict) -> "StudentConfig":
        return cls(
            dim=int(record["dim"]),
            n_student_layers=int(record["n_student_layers"]),
            frame_stride=int(record["frame_stride"]),
            hidden_multiplier=int(record["hidden_multiplier"]),
            distill_layers=tuple(int(x) for x in record["distill_layers"]),
            enhancement=bool(record["enhancement"]),
            enh_hidden=None if record.get("enh_hidden") is None else int(record["enh_hidden"]),
            cell_type=str(record["cell_type"]),
            deconv_strides=tuple(int(x) for x in record["deconv_strides"]),
        )


@dataclass
class StudentOutput:
    representation: T.Tensor
    predictions: dict[int, T.Tensor] = field(default_factory=dict)
    enhanced: T.Tensor | None = None


class StudentModel:
    """Trainable encoder (teacher-shaped prefix) plus prediction/enhancement heads."""

    def __init__(self, config: StudentConfig, params: dict[str, T.Tensor]):
        self.config = config
        self.params = params

    def trainable_parameters(self) -> dict[str, T.Tensor]:
        return {name: p for name, p in self.params.items() if p.requires_grad}

    def encoder_parameters(self) -> dict[str, T.Tensor]:
        return {name: p for name, p in self.params.items() if name.startswith("encoder.")}

    def has_heads(self) -> bool:
        return any(name.startswith("head.") for name in self.params)

    def has_enhancement(self) -> bool:
        return any(name.startswith("enhancement.") for name in self.params)

    def checksum(self) -> str:
        return parameter_checksum(self.params)


def _deconv_channel_plan(first_in: int, n_layers: int) -> list[tuple[int, int]]:
    plan = []
    c_in = first_in
    for i in range(1, n_layers + 1):
        c_out = 1 if i == n_layers else max(1, c_in // 2)
        plan.append((c_in, c_out))
        c_in = c_out
    return plan


def _init_enhancement(rng: np.random.Generator, cfg: StudentConfig) -> dict[str, np.ndarray]:
    hidden = cfg.enh_hidden if cfg.enh_hidden is not None else cfg.dim
    if hidden < 1:
        raise ConfigError(f"enhancement hidden size must be positive, got {hidden}")
    if len(cfg.deconv_strides) != N_DECONV_LAYERS:
        raise ConfigError(f"deconv stack must have exactly {N_DECONV_LAYERS} layers, "
                          f"got {len(cfg.deconv_strides)}")
    if math.prod(cfg.deconv_strides) != cfg.frame_stride:
        raise ConfigError(f"deconv strides {cfg.deconv_strides} multiply to "
                          f"{math.prod(cfg.deconv_strides)}, expected frame_stride "
                          f"{cfg.frame_stride}")
    if cfg.cell_type not in ("lstm", "gru"):
        raise ConfigError(f"unknown recurrent cell type {cfg.cell_type!r}")
    gates = 4 if cfg.cell_type == "lstm" else 3
    arrays: dict[str, np.ndarray] = {}
    for direction in ("fwd", "bwd"):
        arrays[f"enhancement.rnn.{direction}.w_x"] = _init(rng, (cfg.dim, gates * hidden), cfg.dim)
        arrays[f"enhancement.rnn.{direction}.w_h"] = _init(rng, (hidden, gates * hidden), hidden)
        arrays[f"enhancement.rnn.{direction}.bias"] = np.zeros(gates * hidden)
    for i, ((c_in, c_out), stride) in enumerate(
            zip(_deconv_channel_plan(2 * hidden, N_DECONV_LAYERS), cfg.deconv_strides), start=1):
        kw = 2 * stride
        arrays[f"enhancement.deconv{i}.kernel"] = _init(rng, (kw, c_in, c_out), c_in * kw)
    return arrays


def init_student_from_teacher(teacher: TeacherSurrogate,
                              n_student_layers: int = DEFAULT_STUDENT_LAYERS,
                              distill_layers=DEFAULT_DISTILL_LAYERS,
                              enhancement: bool = False,
                              enh_hidden: int | None = None,
                              cell_type: str = "lstm",
                              deconv_strides=DEFAULT_DECONV_STRIDES,
                              dim: int | None = None,
                              seed: int = 1) -> StudentModel:
    """Copy the teacher's front-end and first blocks; heads start seeded-random."""
    if dim is not None and dim != teacher.dim:
        raise ConfigError(f"student width {dim} does not match teacher width {teacher.dim}")
    if n_student_layers < 1:
        raise ConfigError(f"student needs at least one mixing layer, got {n_student_layers}")
    if n_student_layers > teacher.n_layers:
        raise ConfigError(f"student depth {n_student_layers} exceeds teacher depth "
                          f"{teacher.n_layers}")
    distill_layers = tuple(sorted(int(l) for l in distill_layers))
    if not distill_layers:
        raise ConfigError("distill_layers must be nonempty")
    for l in distill_layers:
        if not 1 <= l <= teacher.n_layers:
            raise ConfigError(f"distill layer {l} outside teacher range [1, {teacher.n_layers}]")

    config = StudentConfig(dim=teacher.dim, n_student_layers=n_student_layers,
                           frame_stride=teacher.frame_stride,
                           hidden_multiplier=teacher.hidden_multiplier,
                           distill_layers=distill_layers, enhancement=enhancement,
                           enh_hidden=enh_hidden, cell_type=cell_type,
                           deconv_strides=tuple(int(s) for s in deconv_strides))

    params: dict[str, T.Tensor] = {}
    copied = ["frontend.kernel"]
    for k in range(1, n_student_layers + 1):
        copied += [f"block{k}.w1", f"block{k}.b1", f"block{k}.w2", f"block{k}.b2"]
    for name in copied:
        params["encoder." + name] = T.parameter(np.array(teacher.params[name].values, copy=True))

    rng = np.random.default_rng(seed)
    for l in distill_layers:
        params[f"head.{l}.w"] = T.parameter(_init(rng, (teacher.dim, teacher.dim), teacher.dim))
        params[f"head.{l}.b"] = T.parameter(np.zeros(teacher.dim))
    if enhancement:
        for name, arr in _init_enhancement(rng, config).items():
            params[name] = T.parameter(arr)
    return StudentModel(config, params)


def _enhancement_forward(student: StudentModel, rep: T.Tensor, n_samples: int) -> T.Tensor:
    cfg = student.config
    hidden = cfg.enh_hidden if cfg.enh_hidden is not None else cfg.dim
    p = student.params
    rnn = T.BiRecurrentParams(
        forward=T.RecurrentParams(p["enhancement.rnn.fwd.w_x"], p["enhancement.rnn.fwd.w_h"],
                                  p["enhancement.rnn.fwd.bias"]),
        backward=T.RecurrentParams(p["enhancement.rnn.bwd.w_x"], p["enhancement.rnn.bwd.w_h"],
                                   p["enhancement.rnn.bwd.bias"]),
        hidden=hidden, cell=cfg.cell_type)
    h = T.bidir_recurrent(rep, rnn)
    for i, stride in enumerate(cfg.deconv_strides, start=1):
        h = T.gelu(T.conv1d_transposed(h, p[f"enhancement.deconv{i}.kernel"], stride=stride))
    flat = T.reshape(h, (-1,))
    if flat.values.size < n_samples:
        raise ShapeError(f"enhancement output {flat.values.size} shorter than input "
                         f"{n_samples}")
    return T.narrow(flat, 0, 0, n_samples)


def student_forward(student: StudentModel, w: Waveform) -> StudentOutput:
    """Predictions per distilled layer plus (optionally) the reconstructed waveform."""
    outputs = encoder_forward(w.samples, student.params, "encoder.",
                              student.config.n_student_layers, student.config.frame_stride)
    rep = outputs[-1]
    predictions: dict[int, T.Tensor] = {}
    for l in student.config.distill_layers:
        w_name, b_name = f"head.{l}.w", f"head.{l}.b"
        if w_name in student.params:
            predictions[l] = T.linear(rep, student.params[w_name], student.params[b_name])
    enhanced = None
    if student.has_enhancement():
        enhanced = _enhancement_forward(student, rep, len(w))
    return StudentOutput(representation=rep, predictions=predictions, enhanced=enhanced)
