"""Candidate weight lattice and grid-searched CER vectors."""

from __future__ import annotations

import json
import logging
import math
import os
import shlex
import subprocess
import tempfile
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from ..errors import InvalidStep, OracleFailure
from ..metrics import cer
from .mixing import MixWeights, mix
from .wav import WaveBuffer, write_wav

logger = logging.getLogger(__name__)

__all__ = [
    "OAGrid",
    "build_grid",
    "CerVector",
    "OAUtterance",
    "AsrOracle",
    "CommandAsrOracle",
    "CerCache",
    "cer_vector",
]

_EPS = 1e-9


@dataclass(frozen=True)
class OAGrid:
    k: float
    w2_step: float
    w1_values: tuple[float, ...]
    w2_values: tuple[float, ...]
    candidates: tuple[MixWeights, ...]

    def __len__(self):
        return len(self.candidates)

    def index(self, w1: float, w2: float) -> int:
        for i, c in enumerate(self.candidates):
            if abs(c.w1 - w1) < 1e-9 and abs(c.w2 - w2) < 1e-9:
                return i
        raise KeyError((w1, w2))

    def step_distance(self, i: int, j: int) -> int:
        """Chebyshev distance between two candidates in grid steps."""
        a, b = self.candidates[i], self.candidates[j]
        # rounded so that float spacing noise never turns 1 step into 1.0000000002
        return max(round(abs(a.w1 - b.w1) / self.k), round(abs(a.w2 - b.w2) / self.w2_step))

    def as_array(self) -> np.ndarray:
        return np.array([[c.w1, c.w2] for c in self.candidates])

    def describe(self) -> dict:
        return {"k": self.k, "w2_step": self.w2_step, "size": len(self)}


def build_grid(k: float = 0.05, w2_step: float = 0.1) -> OAGrid:
    """Enumerate (w1, w2) pairs in lexicographic order.

    w1 runs over {0, k, 2k, ...} up to 1, w2 over {0, step, ...} strictly
    below 1, and pairs with ``w1 + w2 > 1`` are left out so that the third
    weight stays non-negative.
    """
    if not (0 < k <= 1) or not (0 < w2_step <= 1):
        raise InvalidStep(f"steps must lie in (0, 1], got k={k}, w2_step={w2_step}")
    n1 = int(math.floor(1.0 / k + _EPS))
    w1_values = tuple(round(i * k, 12) for i in range(n1 + 1))
    n2 = int(math.ceil(1.0 / w2_step - _EPS))
    w2_values = tuple(round(j * w2_step, 12) for j in range(n2))
    cands = tuple(
        MixWeights(a, b) for a in w1_values for b in w2_values if a + b <= 1.0 + 1e-12
    )
    return OAGrid(k, w2_step, w1_values, w2_values, cands)


@dataclass(frozen=True)
class CerVector:
    cers: np.ndarray
    failed: tuple[int, ...] = ()
    hyps: tuple[str, ...] = field(default=(), compare=False)

    @property
    def partial(self) -> bool:
        return bool(self.failed)

    def __len__(self):
        return len(self.cers)


@dataclass(frozen=True, eq=False)
class OAUtterance:
    utt_id: str
    xsum: WaveBuffer
    y_sep: WaveBuffer
    xgss: WaveBuffer
    ref_text: str


class AsrOracle(Protocol):
    def transcribe(self, audio: WaveBuffer) -> str: ...


class CommandAsrOracle:
    """Run an external recogniser per WAV file.

    ``template`` must contain ``{wav}``; the command prints the hypothesis as
    UTF-8 on stdout. A nonzero exit status raises :class:`OracleFailure`.
    """

    def __init__(self, template: str, timeout: float | None = None, tmpdir=None):
        if "{wav}" not in template:
            raise ValueError("ASR command template must contain {wav}")
        self.template = template
        self.timeout = timeout
        self.tmpdir = tmpdir

    def run_file(self, path) -> str:
        cmd = shlex.split(self.template.replace("{wav}", shlex.quote(str(path))))
        try:
            proc = subprocess.run(cmd, capture_output=True, timeout=self.timeout)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise OracleFailure(str(path), str(exc)) from None
        if proc.returncode != 0:
            raise OracleFailure(str(path), proc.stderr.decode("utf-8", "replace").strip())
        return proc.stdout.decode("utf-8").strip()

    def transcribe(self, audio: WaveBuffer) -> str:
        fd, name = tempfile.mkstemp(suffix=".wav", dir=self.tmpdir)
        os.close(fd)
        try:
            write_wav(audio, name)
            return self.run_file(name)
        finally:
            os.unlink(name)


class CerCache:
    """Grid-cell results keyed by (utt_id, w1, w2), optionally backed by JSON lines."""

    def __init__(self, path=None):
        self.path = Path(path) if path else None
        self._lock = threading.Lock()
        self._data: dict[tuple[str, float, float], tuple[float, str]] = {}
        if self.path and self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    row = json.loads(line)
                    self._data[self._key(row["utt_id"], row["w1"], row["w2"])] = (row["cer"], row["hyp"])

    @staticmethod
    def _key(utt_id, w1, w2):
        return (utt_id, round(float(w1), 9), round(float(w2), 9))

    def get(self, utt_id, w: MixWeights):
        return self._data.get(self._key(utt_id, w.w1, w.w2))

    def put(self, utt_id, w: MixWeights, value: float, hyp: str):
        row = {"utt_id": utt_id, "w1": w.w1, "w2": w.w2, "cer": value, "hyp": hyp}
        with self._lock:
            self._data[self._key(utt_id, w.w1, w.w2)] = (value, hyp)
            if self.path:
                with open(self.path, "a", encoding="utf-8") as f:
                    f.write(json.dumps(row, ensure_ascii=False) + "\n")

    def __len__(self):
        return len(self._data)


def _transcribe(asr, audio):
    if hasattr(asr, "transcribe"):
        return asr.transcribe(audio)
    return asr(audio)


def cer_vector(
    utt: OAUtterance,
    grid: OAGrid,
    asr,
    cache: CerCache | None = None,
    workers: int = 4,
    normalize: bool = True,
) -> CerVector:
    """CER of the recogniser's output on every grid mixture of one utterance.

    Cells already in ``cache`` are not recomputed. Oracle failures leave a
    NaN in the vector and are listed in ``failed``.
    """
    cache = cache if cache is not None else CerCache()
    n = len(grid)
    cers = np.full(n, np.nan)
    hyps = [""] * n
    todo = []
    for i, w in enumerate(grid.candidates):
        hit = cache.get(utt.utt_id, w)
        if hit is None:
            todo.append(i)
        else:
            cers[i], hyps[i] = hit

    def run(i):
        w = grid.candidates[i]
        hyp = _transcribe(asr, mix(utt.xsum, utt.y_sep, utt.xgss, w))
        value = cer(utt.ref_text, hyp, normalize).cer
        cache.put(utt.utt_id, w, value, hyp)
        return value, hyp

    def collect(i, thunk):
        try:
            cers[i], hyps[i] = thunk()
        except OracleFailure as exc:
            logger.warning("grid cell %s of %s failed: %s", grid.candidates[i], utt.utt_id, exc)
            failed.append(i)

    failed = []
    if workers <= 1:
        for i in todo:
            collect(i, lambda i=i: run(i))
    elif todo:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {i: pool.submit(run, i) for i in todo}
            for i, fut in futures.items():
                collect(i, fut.result)
    return CerVector(cers, tuple(failed), tuple(hyps))
