"""Optimization loop: seeded batch assembly, online contamination, distillation
plus optional enhancement loss, AdamW with linear warmup/decay, periodic
checkpoints, and a JSON-lines metrics log.

Desk-scale defaults (2000 iterations, batch 4) keep runs laptop-sized; the
full-scale recipe they stand in for (200k iterations, batch 24, 14k warmup,
peak LR 2e-4) is recorded alongside every serialized config.
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass, fields

import numpy as np

from . import tensor as T
from .audio import Waveform, read_wav
from .augment import (
    AugmentAction,
    CurriculumState,
    augment_batch,
    load_manifest,
    load_noise_bank,
    load_rir_bank,
    reverb_threshold,
    snr_lower_bound,
    stable_hash,
)
from .errors import ConfigError, DataError, DistilRobustError, ParameterError, ShapeError
from .losses import KDLossParts, STFTParams, combined_loss, kd_loss_parts, l1_freq, l1_wav
from .model import (
    StudentConfig,
    StudentModel,
    TeacherSurrogate,
    init_student_from_teacher,
    parameter_checksum,
    student_forward,
    teacher_forward,
)

EXPERIMENTS = ("A", "B", "C1", "C2")
ENHANCEMENT_LOSSES = ("none", "l1_wav", "l1_freq")

# full-scale recipe the desk defaults are scaled down from
PAPER_SCALE_RECIPE = {
    "total_iterations": 200_000,
    "batch_size": 24,
    "warmup_iterations": 14_000,
    "lr_peak": 2e-4,
}

_PRESET_TABLE = {
    "A": {"curriculum": False, "enhancement_loss": "none", "lambda_weight": 0.0},
    "B": {"curriculum": True, "enhancement_loss": "none", "lambda_weight": 0.0},
    "C1": {"curriculum": True, "enhancement_loss": "l1_wav", "lambda_weight": 10.0},
    "C2": {"curriculum": True, "enhancement_loss": "l1_freq", "lambda_weight": 1.0},
}


@dataclass
class TrainConfig:
    experiment: str = "A"
    total_iterations: int = 2000
    batch_size: int = 4
    lr_peak: float = 2e-4
    warmup_iterations: int | None = None  # None: 7% of total, the full-scale ratio
    lambda_weight: float = 0.0
    enhancement_loss: str = "none"
    curriculum: bool = False
    distill_layers: tuple[int, ...] = (4, 8, 12)
    master_seed: int = 0
    teacher_seed: int = 100
    student_seed: int = 1
    teacher_layers: int = 12
    dim: int = 32
    student_layers: int = 2
    frame_stride: int = 320
    hidden_multiplier: int = 2
    enh_hidden: int | None = None
    cell_type: str = "lstm"
    deconv_strides: tuple[int, ...] = (2, 2, 2, 2, 2, 2, 5)
    stft_window: int = 400
    stft_hop: int = 160
    stft_fft: int = 512
    crop_samples: int = 16000
    noise_before_reverb: bool = True
    kd_normalize_by_frames: bool = False
    grad_clip: float | None = None  # not supported; kept as an explicit null
    dropout: float | None = None  # not supported; kept as an explicit null
    checkpoint_every: int = 100
    out_dir: str = "runs/out"
    data_manifest: str | None = None
    noise_manifest: str | None = None
    rir_manifest: str | None = None

    def __post_init__(self):
        if self.warmup_iterations is None:
            self.warmup_iterations = round(0.07 * self.total_iterations)
        self.distill_layers = tuple(int(l) for l in self.distill_layers)
        self.deconv_strides = tuple(int(s) for s in self.deconv_strides)

    @classmethod
    def preset(cls, experiment: str, **overrides) -> "TrainConfig":
        if experiment not in _PRESET_TABLE:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {experiment!r}")
        base = dict(_PRESET_TABLE[experiment], experiment=experiment)
        base.update(overrides)
        cfg = cls(**base)
        cfg.validate()
        return cfg

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got "
                              f"{self.experiment!r}")
        preset = _PRESET_TABLE[self.experiment]
        if self.curriculum != preset["curriculum"]:
            raise ConfigError(f"experiment {self.experiment} requires curriculum="
                              f"{preset['curriculum']}, got curriculum={self.curriculum}")
        if self.enhancement_loss != preset["enhancement_loss"]:
            raise ConfigError(f"experiment {self.experiment} requires enhancement_loss="
                              f"{preset['enhancement_loss']!r}, got enhancement_loss="
                              f"{self.enhancement_loss!r}")
        if self.lambda_weight != preset["lambda_weight"]:
            raise ConfigError(f"experiment {self.experiment} requires lambda_weight="
                              f"{preset['lambda_weight']}, got lambda_weight="
                              f"{self.lambda_weight}")
        if self.enhancement_loss not in ENHANCEMENT_LOSSES:
            raise ConfigError(f"enhancement_loss must be one of {ENHANCEMENT_LOSSES}, got "
                              f"{self.enhancement_loss!r}")
        if self.total_iterations < 1:
            raise ConfigError(f"total_iterations must be positive, got {self.total_iterations}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if self.lr_peak <= 0:
            raise ConfigError(f"lr_peak must be positive, got {self.lr_peak}")
        if not 0 <= self.warmup_iterations < self.total_iterations:
            raise ConfigError(f"warmup_iterations {self.warmup_iterations} must lie in "
                              f"[0, total_iterations)")
        if self.lambda_weight < 0:
            raise ConfigError(f"lambda_weight must be nonnegative, got {self.lambda_weight}")
        if not self.distill_layers:
            raise ConfigError("distill_layers must be nonempty")
        for l in self.distill_layers:
            if not 1 <= l <= self.teacher_layers:
                raise ConfigError(f"distill_layers entry {l} outside [1, {self.teacher_layers}]")
        if not 1 <= self.student_layers <= self.teacher_layers:
            raise ConfigError(f"student_layers {self.student_layers} outside "
                              f"[1, {self.teacher_layers}]")
        if self.dim < 1:
            raise ConfigError(f"dim must be positive, got {self.dim}")
        if self.frame_stride < 1:
            raise ConfigError(f"frame_stride must be positive, got {self.frame_stride}")
        if self.crop_samples < self.frame_stride:
            raise ConfigError(f"crop_samples {self.crop_samples} shorter than one frame "
                              f"of {self.frame_stride}")
        if self.enhancement_loss == "l1_freq" and self.crop_samples < self.stft_window:
            raise ConfigError(f"crop_samples {self.crop_samples} shorter than stft_window "
                              f"{self.stft_window}")
        if len(self.deconv_strides) != 7:
            raise ConfigError(f"deconv_strides must have 7 entries, got "
                              f"{len(self.deconv_strides)}")
        if math.prod(self.deconv_strides) != self.frame_stride:
            raise ConfigError(f"deconv_strides product {math.prod(self.deconv_strides)} "
                              f"must equal frame_stride {self.frame_stride}")
        if self.cell_type not in ("lstm", "gru"):
            raise ConfigError(f"cell_type must be 'lstm' or 'gru', got {self.cell_type!r}")
        if self.grad_clip is not None:
            raise ConfigError("grad_clip is not supported and must be null")
        if self.dropout is not None:
            raise ConfigError("dropout is not supported and must be null")
        if self.checkpoint_every < 1:
            raise ConfigError(f"checkpoint_every must be positive, got {self.checkpoint_every}")
        if self.stft_window < 1 or self.stft_hop < 1:
            raise ConfigError("stft_window and stft_hop must be positive")
        if self.stft_fft < self.stft_window:
            raise ConfigError(f"stft_fft {self.stft_fft} < stft_window {self.stft_window}")

    def to_dict(self) -> dict:
        record = {}
        for f in fields(self):
            value = getattr(self, f.name)
            record[f.name] = list(value) if isinstance(value, tuple) else value
        record["reference_recipe"] = dict(PAPER_SCALE_RECIPE)
        return record

    @classmethod
    def from_dict(cls, record: dict) -> "TrainConfig":
        record = dict(record)
        record.pop("reference_recipe", None)
        known = {f.name for f in fields(cls)}
        unknown = set(record) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        cfg = cls(**record)
        cfg.validate()
        return cfg

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        try:
            record = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(record, dict):
            raise ConfigError("config JSON must be an object")
        return cls.from_dict(record)

    def stft_params(self) -> STFTParams:
        return STFTParams(window_length=self.stft_window, hop=self.stft_hop,
                          fft_size=self.stft_fft)


def lr_at(iteration: int, cfg: TrainConfig) -> float:
    """Linear ramp to lr_peak over the warmup, then linear decay to zero."""
    n, warm = cfg.total_iterations, cfg.warmup_iterations
    if not 0 <= iteration <= n:
        raise ParameterError(f"iteration {iteration} outside [0, {n}]")
    if iteration <= warm:
        return cfg.lr_peak if warm == 0 else cfg.lr_peak * iteration / warm
    return cfg.lr_peak * (n - iteration) / (n - warm)


@dataclass
class AdamMoments:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, T.Tensor]) -> "AdamMoments":
        return cls(m={name: np.zeros_like(p.values) for name, p in params.items()},
                   v={name: np.zeros_like(p.values) for name, p in params.items()})


def adamw_step(params: dict[str, T.Tensor], grads: dict[str, np.ndarray],
               moments: AdamMoments, lr: float, beta1: float = 0.9, beta2: float = 0.98,
               eps: float = 1e-6, weight_decay: float = 0.01):
    """One decoupled-weight-decay Adam update with bias correction, in place."""
    moments.step += 1
    t = moments.step
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name in sorted(params):
        p = params[name]
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.values)
        if g.shape != p.values.shape:
            raise ShapeError(f"gradient for {name}: shape {g.shape} vs parameter "
                             f"{p.values.shape}")
        moments.m[name] = beta1 * moments.m[name] + (1.0 - beta1) * g
        moments.v[name] = beta2 * moments.v[name] + (1.0 - beta2) * (g * g)
        m_hat = moments.m[name] / bc1
        v_hat = moments.v[name] / bc2
        p.values = p.values - lr * m_hat / (np.sqrt(v_hat) + eps) - lr * weight_decay * p.values


@dataclass
class TrainState:
    config: TrainConfig
    iteration: int
    student: StudentModel
    moments: AdamMoments
    teacher_checksum: str = ""


def build_teacher(cfg: TrainConfig) -> TeacherSurrogate:
    return TeacherSurrogate(n_layers=cfg.teacher_layers, dim=cfg.dim,
                            frame_stride=cfg.frame_stride,
                            hidden_multiplier=cfg.hidden_multiplier, seed=cfg.teacher_seed)


def build_student(cfg: TrainConfig, teacher: TeacherSurrogate) -> StudentModel:
    return init_student_from_teacher(
        teacher, n_student_layers=cfg.student_layers, distill_layers=cfg.distill_layers,
        enhancement=cfg.enhancement_loss != "none", enh_hidden=cfg.enh_hidden,
        cell_type=cfg.cell_type, deconv_strides=cfg.deconv_strides, seed=cfg.student_seed)


def _normalize_corpus(corpus) -> list[tuple[str, Waveform]]:
    normalized = []
    for i, item in enumerate(corpus):
        if isinstance(item, tuple):
            normalized.append((str(item[0]), item[1]))
        else:
            normalized.append((f"utt{i:04d}", item))
    return normalized


def _load_corpus(cfg: TrainConfig) -> list[tuple[str, Waveform]]:
    if cfg.data_manifest is None:
        raise ConfigError("data_manifest is required when no corpus is passed in")
    corpus = []
    for entry in load_manifest(cfg.data_manifest, expect_kind="speech"):
        try:
            corpus.append((entry.id, read_wav(entry.path)))
        except DistilRobustError as exc:
            raise DataError(f"utterance {entry.id}: {exc}") from exc
    return corpus


def _check_corpus(cfg: TrainConfig, corpus: list[tuple[str, Waveform]]):
    min_len = cfg.frame_stride
    if cfg.enhancement_loss == "l1_freq":
        min_len = max(min_len, cfg.stft_window)
    for utt_id, w in corpus:
        if len(w) < min_len:
            raise DataError(f"utterance {utt_id}: {len(w)} samples is shorter than the "
                            f"required minimum {min_len}")


def _crop(w: Waveform, crop_samples: int, seed: int) -> Waveform:
    if len(w) <= crop_samples:
        return Waveform(w.samples.copy(), w.sample_rate_hz)
    start = int(np.random.default_rng(seed).integers(0, len(w) - crop_samples + 1))
    return Waveform(w.samples[start : start + crop_samples].copy(), w.sample_rate_hz)


class _BatchSampler:
    """Sequential without-replacement order within each seeded epoch shuffle."""

    def __init__(self, n_utts: int, batch_size: int, master_seed: int):
        self.n_utts = n_utts
        self.batch_size = batch_size
        self.master_seed = master_seed
        self._perms: dict[int, np.ndarray] = {}

    def _perm(self, epoch: int) -> np.ndarray:
        if epoch not in self._perms:
            rng = np.random.default_rng(stable_hash(self.master_seed, "order", epoch))
            self._perms[epoch] = rng.permutation(self.n_utts)
        return self._perms[epoch]

    def indices(self, iteration: int) -> list[int]:
        out = []
        for j in range(self.batch_size):
            slot = iteration * self.batch_size + j
            out.append(int(self._perm(slot // self.n_utts)[slot % self.n_utts]))
        return out


def _metrics_record(iteration: int, lr: float, breakdown, plans, tau: float,
                    threshold: float) -> dict:
    counts = {action.value: 0 for action in AugmentAction}
    for plan in plans:
        counts[plan.action.value] += 1
    return {
        "iter": iteration,
        "lr": lr,
        "kd_l1": breakdown.kd_l1,
        "kd_cos": breakdown.kd_cos,
        "enh": breakdown.enh,
        "combined": breakdown.combined,
        "action_counts": counts,
        "tau": tau,
        "reverb_threshold": threshold,
    }


def _mean_of(tensors: list[T.Tensor]) -> T.Tensor:
    total = tensors[0]
    for t in tensors[1:]:
        total = T.add(total, t)
    return T.scale(total, 1.0 / len(tensors))


def train(cfg: TrainConfig, corpus=None, noise_bank=None, rir_bank=None,
          resume_from: str | None = None, stop_after: int | None = None) -> TrainState:
    """Run (or resume) the loop; returns the final state after writing artifacts.

    `stop_after` ends the run early at that iteration count, simulating an
    interruption; resume from the matching checkpoint to finish the run.
    """
    cfg.validate()
    corpus = _normalize_corpus(corpus) if corpus is not None else _load_corpus(cfg)
    if not corpus:
        raise DataError("training corpus is empty")
    _check_corpus(cfg, corpus)
    if noise_bank is None:
        if cfg.noise_manifest is None:
            raise ConfigError("noise_manifest is required when no noise bank is passed in")
        noise_bank = load_noise_bank(cfg.noise_manifest)
    if rir_bank is None:
        if cfg.rir_manifest is None:
            raise ConfigError("rir_manifest is required when no RIR bank is passed in")
        rir_bank = load_rir_bank(cfg.rir_manifest)
    if not noise_bank or not rir_bank:
        raise DataError("noise and RIR banks must be nonempty")

    teacher = build_teacher(cfg)
    checksum_before = teacher.checksum()

    if resume_from is not None:
        state = load_checkpoint(resume_from)
        if state.config.to_json() != cfg.to_json():
            raise ConfigError("resume checkpoint was written with a different config")
        student = state.student
        moments = state.moments
        start_iteration = state.iteration
    else:
        student = build_student(cfg, teacher)
        moments = AdamMoments.zeros_like(student.params)
        start_iteration = 0

    n = cfg.total_iterations
    end_iteration = n if stop_after is None else min(n, stop_after)
    if start_iteration > end_iteration:
        raise ConfigError(f"checkpoint is at iteration {start_iteration}, beyond the "
                          f"requested end {end_iteration}")

    os.makedirs(cfg.out_dir, exist_ok=True)
    metrics_path = os.path.join(cfg.out_dir, "metrics.jsonl")
    sampler = _BatchSampler(len(corpus), cfg.batch_size, cfg.master_seed)
    stft = cfg.stft_params() if cfg.enhancement_loss == "l1_freq" else None
    params = student.params

    with open(metrics_path, "a" if resume_from is not None else "w", encoding="utf-8") as log:
        for iteration in range(start_iteration, end_iteration):
            batch_ids, cleans = [], []
            for j, utt_index in enumerate(sampler.indices(iteration)):
                utt_id, w = corpus[utt_index]
                batch_ids.append(utt_id)
                cleans.append(_crop(w, cfg.crop_samples,
                                    stable_hash(cfg.master_seed, "crop", iteration, j)))

            sched_iter = iteration if cfg.curriculum else cfg.total_iterations
            sched = CurriculumState(sched_iter, cfg.total_iterations)
            tau = snr_lower_bound(sched)
            threshold = reverb_threshold(sched)
            try:
                pairs = augment_batch(cleans, sched, noise_bank, rir_bank,
                                      stable_hash(cfg.master_seed, "aug", iteration),
                                      noise_first=cfg.noise_before_reverb)
            except DistilRobustError as exc:
                raise DataError(f"iteration {iteration}, utterances {batch_ids}: {exc}") from exc

            T.zero_grads(params.values())
            l1_parts, cos_parts, enh_parts = [], [], []
            plans = []
            for clean, (augmented, plan) in zip(cleans, pairs):
                plans.append(plan)
                teacher_maps = teacher_forward(teacher, clean)
                out = student_forward(student, augmented)
                parts = kd_loss_parts(teacher_maps, out.predictions, cfg.distill_layers,
                                      normalize_by_frames=cfg.kd_normalize_by_frames)
                l1_parts.append(parts.l1)
                cos_parts.append(parts.cos)
                if cfg.enhancement_loss == "l1_wav":
                    enh_parts.append(l1_wav(out.enhanced, clean.samples))
                elif cfg.enhancement_loss == "l1_freq":
                    enh_parts.append(l1_freq(out.enhanced, clean.samples, stft))

            l1_mean = _mean_of(l1_parts)
            cos_mean = _mean_of(cos_parts)
            kd_parts = KDLossParts(total=T.add(l1_mean, cos_mean), l1=l1_mean, cos=cos_mean)
            enh_mean = _mean_of(enh_parts) if enh_parts else None
            breakdown = combined_loss(kd_parts, enh_mean, cfg.lambda_weight)

            T.backward(breakdown.tensor)
            lr = lr_at(iteration + 1, cfg)
            grads = {name: p.grad for name, p in params.items() if p.grad is not None}
            adamw_step(params, grads, moments, lr)

            record = _metrics_record(iteration, lr, breakdown, plans, tau, threshold)
            log.write(json.dumps(record, sort_keys=True) + "\n")

            done = iteration + 1
            if done % cfg.checkpoint_every == 0 or done == end_iteration:
                state = TrainState(cfg, done, student, moments, checksum_before)
                save_checkpoint(state, os.path.join(cfg.out_dir, f"ckpt_{done:06d}.drtc"))

    if teacher.checksum() != checksum_before:
        raise DistilRobustError("teacher parameters changed during training")

    final = TrainState(cfg, end_iteration, student, moments, checksum_before)
    if end_iteration == n:
        save_checkpoint(final, os.path.join(cfg.out_dir, "ckpt_final.drtc"))
    return final


# ---------------------------------------------------------------------------
# checkpoint container: magic "DRTC", u8 version, u32 header length, header
# JSON, then per parameter a length-prefixed name and DRTN tensor records
# (value, and optimizer moments when present)

DRTC_MAGIC = b"DRTC"
DRTC_VERSION = 1


def _student_config_from(cfg: TrainConfig) -> StudentConfig:
    return StudentConfig(dim=cfg.dim, n_student_layers=cfg.student_layers,
                         frame_stride=cfg.frame_stride,
                         hidden_multiplier=cfg.hidden_multiplier,
                         distill_layers=cfg.distill_layers,
                         enhancement=cfg.enhancement_loss != "none",
                         enh_hidden=cfg.enh_hidden, cell_type=cfg.cell_type,
                         deconv_strides=cfg.deconv_strides)


def _write_container(path: str, header: dict, blocks: list[tuple[str, list[np.ndarray]]]):
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(DRTC_MAGIC)
        fh.write(struct.pack("<B", DRTC_VERSION))
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for name, tensors in blocks:
            name_bytes = name.encode("utf-8")
            fh.write(struct.pack("<H", len(name_bytes)))
            fh.write(name_bytes)
            for arr in tensors:
                fh.write(T.tensor_to_bytes(arr))


def _read_container(path: str) -> tuple[dict, list[tuple[str, list[np.ndarray]]]]:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != DRTC_MAGIC:
        raise DataError(f"{path}: not a checkpoint container")
    version = buf[4]
    if version != DRTC_VERSION:
        raise DataError(f"{path}: unsupported container version {version}")
    (header_len,) = struct.unpack_from("<I", buf, 5)
    pos = 9
    header = json.loads(buf[pos : pos + header_len].decode("utf-8"))
    pos += header_len
    per_name = 3 if header.get("has_moments") else 1
    blocks = []
    while pos < len(buf):
        (name_len,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        name = buf[pos : pos + name_len].decode("utf-8")
        pos += name_len
        tensors = []
        for _ in range(per_name):
            arr, pos = T.tensor_from_bytes(buf, pos)
            tensors.append(arr)
        blocks.append((name, tensors))
    return header, blocks


def save_checkpoint(state: TrainState, path: str):
    header = {
        "format": "drtc",
        "has_moments": True,
        "iteration": state.iteration,
        "adam_step": state.moments.step,
        "teacher_checksum": state.teacher_checksum,
        "config": state.config.to_dict(),
    }
    blocks = []
    for name in sorted(state.student.params):
        p = state.student.params[name]
        blocks.append((name, [p.values, state.moments.m[name], state.moments.v[name]]))
    _write_container(path, header, blocks)


def load_checkpoint(path: str) -> TrainState:
    header, blocks = _read_container(path)
    if not header.get("has_moments"):
        raise DataError(f"{path}: exported model without optimizer state; it cannot "
                        f"resume training")
    cfg = TrainConfig.from_dict(header["config"])
    params = {name: T.parameter(tensors[0]) for name, tensors in blocks}
    student = StudentModel(_student_config_from(cfg), params)
    moments = AdamMoments(m={name: tensors[1] for name, tensors in blocks},
                          v={name: tensors[2] for name, tensors in blocks},
                          step=int(header["adam_step"]))
    return TrainState(config=cfg, iteration=int(header["iteration"]), student=student,
                      moments=moments, teacher_checksum=header.get("teacher_checksum", ""))


def export_student(state: TrainState, path: str):
    """Write the representation encoder only; prediction/enhancement heads are dropped."""
    header = {
        "format": "drtc",
        "has_moments": False,
        "iteration": state.iteration,
        "exported": True,
        "config": state.config.to_dict(),
    }
    blocks = []
    for name in sorted(state.student.params):
        if name.startswith("encoder."):
            blocks.append((name, [state.student.params[name].values]))
    _write_container(path, header, blocks)


def load_exported(path: str) -> StudentModel:
    header, blocks = _read_container(path)
    if header.get("has_moments"):
        raise DataError(f"{path}: full checkpoint, not an exported model")
    cfg = TrainConfig.from_dict(header["config"])
    params = {name: T.Tensor(tensors[0]) for name, tensors in blocks}
    return StudentModel(_student_config_from(cfg), params)


# ---------------------------------------------------------------------------
# metrics helpers


def load_metrics(path: str) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def smoothed_loss(records: list[dict], iteration: int, window: int = 10) -> float:
    """Mean combined loss over the trailing `window` iterations ending at `iteration`."""
    values = [r["combined"] for r in records
              if iteration - window < r["iter"] <= iteration]
    if not values:
        raise DataError(f"no metrics records in ({iteration - window}, {iteration}]")
    return float(np.mean(values))
