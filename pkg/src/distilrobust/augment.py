"""Four-action contamination sampler with a progressive difficulty schedule.

Each utterance draws one of four equiprobable actions: pass through clean,
add noise at a sampled SNR, convolve with a room impulse response, or both.
Early in training the schedule keeps the SNR floor high and the reverberation
probability low, relaxing both linearly until the halfway point.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .audio import (
    ROOM_CLASSES,
    RoomImpulseResponse,
    Waveform,
    convolve_rir,
    mix_at_snr,
    read_wav,
    white_noise,
)
from .errors import DataError, ParameterError

SNR_CEILING_DB = 20
FILE_NOISE_PROBABILITY = 0.7


class AugmentAction(enum.Enum):
    A1_CLEAN = "a1_clean"
    A2_NOISE = "a2_noise"
    A3_REVERB = "a3_reverb"
    A4_NOISE_REVERB = "a4_noise_reverb"


_ACTION_ORDER = (
    AugmentAction.A1_CLEAN,
    AugmentAction.A2_NOISE,
    AugmentAction.A3_REVERB,
    AugmentAction.A4_NOISE_REVERB,
)

_NOISE_ACTIONS = (AugmentAction.A2_NOISE, AugmentAction.A4_NOISE_REVERB)
_REVERB_ACTIONS = (AugmentAction.A3_REVERB, AugmentAction.A4_NOISE_REVERB)


def stable_hash(*parts) -> int:
    """Stable 64-bit hash of ints/strings/bytes; identical across processes."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        if isinstance(part, (bytes, bytearray)):
            data = b"B" + bytes(part)
        elif isinstance(part, str):
            data = b"S" + part.encode("utf-8")
        elif isinstance(part, (bool, int, np.integer)):
            data = b"I" + str(int(part)).encode("ascii")
        else:
            raise ParameterError(f"unhashable seed component of type {type(part).__name__}")
        h.update(struct.pack("<I", len(data)))
        h.update(data)
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class CurriculumState:
    """Progress marker: current iteration out of the planned total."""

    iteration: int
    total_iterations: int

    def __post_init__(self):
        if self.total_iterations <= 0:
            raise ParameterError(f"total_iterations must be positive, got {self.total_iterations}")
        if not 0 <= self.iteration <= self.total_iterations:
            raise ParameterError(
                f"iteration {self.iteration} outside [0, {self.total_iterations}]")


def snr_lower_bound(state: CurriculumState) -> float:
    """SNR floor in dB: 20 at the start, linearly down to 0 at the halfway point."""
    it, n = state.iteration, state.total_iterations
    if 2 * it >= n:
        return 0.0
    return 20.0 * (n - 2 * it) / n


def reverb_threshold(state: CurriculumState) -> float:
    """Reverberation probability: 0 at the start, linearly up to 1 at halfway."""
    it, n = state.iteration, state.total_iterations
    if 2 * it >= n:
        return 1.0
    return (2.0 * it) / n


@dataclass(frozen=True)
class AugmentPlan:
    """Everything needed to reproduce one utterance's contamination exactly."""

    action: AugmentAction
    seed: int
    snr_db: int | None = None
    noise_source: str | None = None  # "file" | "white_noise"
    noise_index: int | None = None
    rir_index: int | None = None
    reverb_applied: bool = False

    def __post_init__(self):
        wants_noise = self.action in _NOISE_ACTIONS
        if wants_noise != (self.snr_db is not None):
            raise ParameterError(f"snr_db must be present iff action adds noise "
                                 f"({self.action.value}, snr_db={self.snr_db})")
        if wants_noise != (self.noise_source is not None):
            raise ParameterError(f"noise_source must be present iff action adds noise")
        if self.noise_source not in (None, "file", "white_noise"):
            raise ParameterError(f"unknown noise_source {self.noise_source!r}")
        if (self.noise_source == "file") != (self.noise_index is not None):
            raise ParameterError("noise_index must be present iff noise_source is 'file'")
        if self.reverb_applied and self.action not in _REVERB_ACTIONS:
            raise ParameterError(f"reverb_applied is not valid under {self.action.value}")
        if (self.rir_index is not None) and not self.reverb_applied:
            raise ParameterError("rir_index present without reverb_applied")
        if self.reverb_applied and self.rir_index is None:
            raise ParameterError("reverb_applied without an rir_index")

    def to_dict(self) -> dict:
        return {
            "action": self.action.value,
            "seed": self.seed,
            "snr_db": self.snr_db,
            "noise_source": self.noise_source,
            "noise_index": self.noise_index,
            "rir_index": self.rir_index,
            "reverb_applied": self.reverb_applied,
        }

    @classmethod
    def from_dict(cls, record: dict) -> "AugmentPlan":
        return cls(
            action=AugmentAction(record["action"]),
            seed=int(record["seed"]),
            snr_db=None if record.get("snr_db") is None else int(record["snr_db"]),
            noise_source=record.get("noise_source"),
            noise_index=None if record.get("noise_index") is None else int(record["noise_index"]),
            rir_index=None if record.get("rir_index") is None else int(record["rir_index"]),
            reverb_applied=bool(record.get("reverb_applied", False)),
        )


def sample_plan(state: CurriculumState, n_noise_files: int, n_rirs: int, seed: int) -> AugmentPlan:
    """Draw one contamination plan; fully determined by the seed and schedule state."""
    if n_noise_files < 1:
        raise ParameterError(f"n_noise_files must be >= 1, got {n_noise_files}")
    if n_rirs < 1:
        raise ParameterError(f"n_rirs must be >= 1, got {n_rirs}")
    rng = np.random.default_rng(seed)
    action = _ACTION_ORDER[int(rng.integers(0, 4))]

    snr_db = None
    noise_source = None
    noise_index = None
    if action in _NOISE_ACTIONS:
        # noninteger floors round up so the draw never dips below the schedule
        lo = math.ceil(snr_lower_bound(state))
        snr_db = int(rng.integers(lo, SNR_CEILING_DB + 1))
        p_n = float(rng.uniform())
        if p_n <= FILE_NOISE_PROBABILITY:
            noise_source = "file"
            noise_index = int(rng.integers(0, n_noise_files))
        else:
            noise_source = "white_noise"

    reverb_applied = False
    rir_index = None
    if action in _REVERB_ACTIONS:
        p_r = float(rng.uniform())
        reverb_applied = p_r <= reverb_threshold(state)
        if reverb_applied:
            rir_index = int(rng.integers(0, n_rirs))

    return AugmentPlan(action=action, seed=seed, snr_db=snr_db, noise_source=noise_source,
                       noise_index=noise_index, rir_index=rir_index,
                       reverb_applied=reverb_applied)


def _noise_for_plan(clean: Waveform, plan: AugmentPlan, noise_bank) -> Waveform:
    if plan.noise_source == "file":
        if not 0 <= plan.noise_index < len(noise_bank):
            raise DataError(f"noise index {plan.noise_index} outside bank of {len(noise_bank)}")
        return noise_bank[plan.noise_index]
    return white_noise(len(clean), stable_hash(plan.seed, "white"), narrowband=True,
                       sample_rate_hz=clean.sample_rate_hz)


def _apply_noise(clean: Waveform, plan: AugmentPlan, noise_bank) -> Waveform:
    noise = _noise_for_plan(clean, plan, noise_bank)
    return mix_at_snr(clean, noise, plan.snr_db, seed=stable_hash(plan.seed, "crop"))


def _apply_reverb(w: Waveform, plan: AugmentPlan, rir_bank) -> Waveform:
    if not plan.reverb_applied:
        return w
    if not 0 <= plan.rir_index < len(rir_bank):
        raise DataError(f"rir index {plan.rir_index} outside bank of {len(rir_bank)}")
    return convolve_rir(w, rir_bank[plan.rir_index])


def apply_plan(clean: Waveform, plan: AugmentPlan, noise_bank, rir_bank,
               noise_first: bool = True) -> Waveform:
    """Realize a plan on one clean utterance; output length equals input length."""
    if plan.action is AugmentAction.A1_CLEAN:
        return Waveform(clean.samples.copy(), clean.sample_rate_hz)
    if plan.action is AugmentAction.A2_NOISE:
        return _apply_noise(clean, plan, noise_bank)
    if plan.action is AugmentAction.A3_REVERB:
        out = _apply_reverb(clean, plan, rir_bank)
        return out if out is not clean else Waveform(clean.samples.copy(), clean.sample_rate_hz)
    if noise_first:
        return _apply_reverb(_apply_noise(clean, plan, noise_bank), plan, rir_bank)
    return _apply_noise(_apply_reverb(clean, plan, rir_bank), plan, noise_bank)


def utterance_seed(master_seed: int, iteration: int, index: int) -> int:
    return stable_hash(master_seed, iteration, index)


def augment_batch(batch, state: CurriculumState, noise_bank, rir_bank, master_seed: int,
                  noise_first: bool = True, parallel: bool = False):
    """Contaminate a batch; each utterance depends only on its own index and seed."""
    if not batch:
        raise ParameterError("augment_batch needs a nonempty batch")

    def one(args):
        index, clean = args
        seed = utterance_seed(master_seed, state.iteration, index)
        plan = sample_plan(state, len(noise_bank), len(rir_bank), seed)
        return apply_plan(clean, plan, noise_bank, rir_bank, noise_first=noise_first), plan

    items = list(enumerate(batch))
    if parallel and len(items) > 1:
        with ThreadPoolExecutor(max_workers=min(4, len(items))) as pool:
            return list(pool.map(one, items))
    return [one(item) for item in items]


# ---------------------------------------------------------------------------
# JSON-lines manifests and banks


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    path: str
    kind: str  # "speech" | "noise" | "rir"
    room_class: str | None = None
    duration_s: float | None = None


def load_manifest(path, expect_kind: str | None = None,
                  require_exists: bool = True) -> list[ManifestEntry]:
    """Parse a JSON-lines manifest; ids must be unique and paths must resolve."""
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{line_no}: invalid JSON ({exc})") from exc
            for key in ("id", "path", "kind"):
                if key not in record:
                    raise DataError(f"{path}:{line_no}: missing field {key!r}")
            kind = record["kind"]
            if kind not in ("speech", "noise", "rir"):
                raise DataError(f"{path}:{line_no}: unknown kind {kind!r}")
            if expect_kind is not None and kind != expect_kind:
                raise DataError(f"{path}:{line_no}: expected kind {expect_kind!r}, got {kind!r}")
            entry_id = str(record["id"])
            if entry_id in seen:
                raise DataError(f"{path}:{line_no}: duplicate id {entry_id!r}")
            seen.add(entry_id)
            wav_path = record["path"]
            if not os.path.isabs(wav_path):
                wav_path = os.path.join(base, wav_path)
            if require_exists and not os.path.exists(wav_path):
                raise FileNotFoundError(f"{path}:{line_no}: file not found: {wav_path}")
            room_class = record.get("room_class")
            if room_class is not None and room_class not in ROOM_CLASSES:
                raise DataError(f"{path}:{line_no}: unknown room_class {room_class!r}")
            duration = record.get("duration_s")
            entries.append(ManifestEntry(id=entry_id, path=wav_path, kind=kind,
                                         room_class=room_class,
                                         duration_s=None if duration is None else float(duration)))
    if not entries:
        raise DataError(f"{path}: empty manifest")
    return entries


def load_noise_bank(manifest_path) -> list[Waveform]:
    return [read_wav(e.path) for e in load_manifest(manifest_path, expect_kind="noise")]


def load_rir_bank(manifest_path) -> list[RoomImpulseResponse]:
    bank = []
    for entry in load_manifest(manifest_path, expect_kind="rir"):
        wav = read_wav(entry.path)
        bank.append(RoomImpulseResponse(taps=wav.samples, sample_rate_hz=wav.sample_rate_hz,
                                        room_class=entry.room_class or "medium"))
    return bank
