"""Synthetic action-observation corpus with paired template captions.

Each action is a piecewise phase trajectory: per-(verb, phase) postures
drive 12 actuation channels through clamped sigmoidal ramps, and a
10-dim visual feature flashes object/location identity for a few steps
near the start — brief identity evidence in a sequence that then runs
for 60..200 steps. Captions come from a small template grammar with
per-verb synonym banks.

All randomness flows from one master seed via sha256-derived streams, so
regeneration is byte-identical.
"""

from __future__ import annotations

import gzip
import io
import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DataError
from .seeds import derive_seed, rng_for

SAMPLE_PERIOD_S = 0.3
ACTUATION_DIM = 12
VISUAL_DIM = 10
OBS_DIM = ACTUATION_DIM + VISUAL_DIM
NOISE_SIGMA = 0.02
DURATION_RANGE_S = (18.0, 60.0)

# phase counts differ by verb: approach/grasp/carry/handover style scripts
VERB_PHASES = {
    "bring": 4,
    "put": 4,
    "pick_up": 3,
    "drop": 3,
    "go_to_see": 2,
}
VERBS = tuple(VERB_PHASES)

OBJECTS = ("ball", "cup", "book", "box", "bottle")
LOCATIONS = ("kitchen", "table", "shelf", "desk", "sofa")

# Identity cues are brief flashes, not sustained channels: the source
# shows for a few steps while the robot orients, the object shortly
# after the first phase boundary where manipulation starts.  Outside the
# true flashes the visual block carries distractor glints — other
# identities drifting through view at random off-landmark steps — so a
# captioner cannot just latch whatever shines; it has to keep the one
# flash that lasts and carry it across the rest of the sequence.
# True-flash length is constant and the flashes sit on settled postures
# (clear of the boundary ramps), so they look the same at any duration.
_FLASH_LEN = 8
_SRC_FLASH_AT = 2
_FLASH_GAP = 10  # keep-out margin around the true flash windows
# spurious glints are full brightness but brief: frame-for-frame they look
# exactly like a real glance, and only their duration tells them apart
_GLINT_LEN_LO = 2
_GLINT_LEN_HI = 3


def _place_distractors(rng: np.random.Generator, t: int, obj_at: int,
                       n: int) -> list[int]:
    """Start steps for n distractor flashes, avoiding the true windows."""
    keep_out = [(_SRC_FLASH_AT - _FLASH_GAP, _SRC_FLASH_AT + _FLASH_LEN + _FLASH_GAP),
                (obj_at - _FLASH_GAP, obj_at + _FLASH_LEN + _FLASH_GAP)]
    starts: list[int] = []
    tries = 0
    while len(starts) < n and tries < 64 and t > _FLASH_LEN:
        tries += 1
        a = int(rng.integers(0, t - _FLASH_LEN))
        windows = keep_out + [(b, b + _FLASH_LEN) for b in starts]
        if any(a < hi and a + _FLASH_LEN > lo for lo, hi in windows):
            continue
        starts.append(a)
    return starts

_VERB_SYNONYMS = {
    "bring": ("bring", "get", "fetch"),
    "put": ("put", "place", "set down"),
    "pick_up": ("pick up", "take", "lift"),
    "drop": ("drop", "release"),
    "go_to_see": ("go to see", "go and see", "go to check", "look at"),
}

_TEMPLATES = {
    "bring": (
        "{v} the {o} from the {s}",
        "please {v} the {o} from the {s}",
        "{v} me the {o} that is on the {s}",
        "from the {s} {v} the {o}",
        "{v} the {o} on the {s} to me",
    ),
    "put": (
        "{v} the {o} on the {s}",
        "please {v} the {o} onto the {s}",
        "{v} the {o} down on the {s}",
        "on the {s} {v} the {o}",
        "take the {o} and {v} it on the {s}",
    ),
    "pick_up": (
        "{v} the {o} from the {s}",
        "please {v} the {o} on the {s}",
        "{v} the {o} lying on the {s}",
        "from the {s} {v} the {o}",
        "{v} the {o} off the {s}",
    ),
    "drop": (
        "{v} the {o} from the {s}",
        "please {v} the {o} over the {s}",
        "{v} the {o} onto the {s}",
        "{v} the {o} above the {s}",
        "over the {s} {v} the {o}",
    ),
    "go_to_see": (
        "{v} the {o} on the {s}",
        "please {v} the {o} near the {s}",
        "{v} the {o} at the {s}",
        "move to the {s} and look at the {o}",
        "{v} the {o} by the {s}",
    ),
}

EOS = "<eos>"


@dataclass(frozen=True)
class ActionSpec:
    verb: str
    object_id: int
    source_id: int
    target_id: int
    duration: float
    seed: int

    def __post_init__(self):
        if self.verb not in VERB_PHASES:
            raise DataError(f"unknown verb class {self.verb!r}")
        if self.duration <= 0:
            raise DataError("duration must be positive")

    @property
    def n_steps(self) -> int:
        return math.ceil(self.duration / SAMPLE_PERIOD_S)


@dataclass
class Sample:
    id: int
    verb: str
    object: str
    source: str
    target: str
    observations: np.ndarray  # (T, 22) float64
    captions: list[list[str]]


@lru_cache(maxsize=None)
def _postures(verb: str) -> np.ndarray:
    """Per-phase actuation postures, fixed global constants per verb."""
    rng = rng_for("datagen", "posture", verb)
    return rng.uniform(-0.9, 0.9, size=(VERB_PHASES[verb], ACTUATION_DIM))


def _embedding(kind: str, idx: int) -> np.ndarray:
    bank = OBJECTS if kind == "obj" else LOCATIONS
    if not 0 <= idx < len(bank):
        raise DataError(f"{kind} id {idx} out of range")
    # large relative to posture spread, so quantization cells split on
    # identity before verb when both vary
    e = np.full(5, -0.6)
    e[idx] = 3.3
    return e


def phase_weights(verb: str, n_steps: int) -> np.ndarray:
    """(T, n_phases) partition of unity; clamped sigmoid ramps at the
    equally spaced phase boundaries, transition width 4% of duration."""
    n_phases = VERB_PHASES[verb]
    s = np.linspace(0.0, 1.0, n_steps)
    ramps = []
    for b in range(1, n_phases):
        z = (s - b / n_phases) / 0.04
        ramps.append(1.0 / (1.0 + np.exp(-np.clip(z * 4.0, -30.0, 30.0))))
    w = np.empty((n_steps, n_phases))
    prev = np.ones(n_steps)
    for i, r in enumerate(ramps):
        w[:, i] = prev - r
        prev = r
    w[:, n_phases - 1] = prev
    return w


def phase_ids(verb: str, n_steps: int) -> np.ndarray:
    return phase_weights(verb, n_steps).argmax(axis=1)


def gen_trajectory(spec: ActionSpec, noise_sigma: float = NOISE_SIGMA) -> np.ndarray:
    """(T, 22) observation sequence for one action, T = ceil(duration/0.3)."""
    t = spec.n_steps
    w = phase_weights(spec.verb, t)
    actuation = w @ _postures(spec.verb)

    e_obj = _embedding("obj", spec.object_id)
    e_src = _embedding("src", spec.source_id)
    visual = np.zeros((t, VISUAL_DIM))
    obj_at = int(round(t / VERB_PHASES[spec.verb])) + math.ceil(0.04 * t)
    visual[_SRC_FLASH_AT:_SRC_FLASH_AT + _FLASH_LEN, 5:] = e_src
    visual[obj_at:obj_at + _FLASH_LEN, :5] = e_obj

    rng = rng_for("datagen", "traj", spec.seed)
    for j, a in enumerate(_place_distractors(rng, t, obj_at, 1 + round(t / 80))):
        ident = int(rng.integers(5))
        ln = int(rng.integers(_GLINT_LEN_LO, _GLINT_LEN_HI + 1))
        if j % 2 == 0:
            visual[a:a + ln, :5] = _embedding("obj", ident)
        else:
            visual[a:a + ln, 5:] = _embedding("src", ident)

    obs = np.concatenate([actuation, visual], axis=1)
    if noise_sigma > 0.0:
        obs = obs + noise_sigma * rng.standard_normal(obs.shape)
    return obs


def tokenize_caption(text: str) -> list[str]:
    return text.split() + [EOS]


def gen_captions(spec: ActionSpec, n: int, rng: np.random.Generator) -> list[list[str]]:
    """n paraphrases; synonym x template pairs are cycled in a shuffled
    order so 20 draws always cover many distinct surface forms."""
    if n < 1:
        raise DataError("need n >= 1 captions")
    obj = OBJECTS[spec.object_id]
    src = LOCATIONS[spec.source_id]
    combos = [(syn, tpl) for syn in _VERB_SYNONYMS[spec.verb]
              for tpl in _TEMPLATES[spec.verb]]
    order = rng.permutation(len(combos))
    captions = []
    for i in range(n):
        syn, tpl = combos[order[i % len(combos)]]
        captions.append(tokenize_caption(tpl.format(v=syn, o=obj, s=src)))
    return captions


def gen_corpus(n_actions: int = 50, captions_per_action: int = 20,
               master_seed: int = 0,
               duration_range: tuple[float, float] = DURATION_RANGE_S,
               noise_sigma: float = NOISE_SIGMA) -> list[Sample]:
    """Balanced corpus: n_actions/5 samples per verb class."""
    if n_actions % 5 != 0 or n_actions <= 0:
        raise DataError(
            f"n_actions must be a positive multiple of 5, got {n_actions}")
    samples = []
    for i in range(n_actions):
        verb = VERBS[i % 5]
        rng = rng_for(master_seed, "spec", i)
        object_id = int(rng.integers(len(OBJECTS)))
        source_id = int(rng.integers(len(LOCATIONS)))
        target_id = int(rng.integers(len(LOCATIONS) - 1))
        if target_id >= source_id:
            target_id += 1  # target != source
        duration = float(rng.uniform(*duration_range))
        spec = ActionSpec(verb=verb, object_id=object_id, source_id=source_id,
                          target_id=target_id, duration=duration,
                          seed=derive_seed(master_seed, "traj", i))
        obs = gen_trajectory(spec, noise_sigma=noise_sigma)
        captions = gen_captions(spec, captions_per_action,
                                rng_for(master_seed, "captions", i))
        samples.append(Sample(id=i, verb=verb, object=OBJECTS[object_id],
                              source=LOCATIONS[source_id],
                              target=LOCATIONS[target_id],
                              observations=obs, captions=captions))
    return samples


# ------------------------------------------------------------------- file I/O

def _record(sample: Sample) -> str:
    rec = {
        "id": sample.id,
        "verb": sample.verb,
        "object": sample.object,
        "source": sample.source,
        "target": sample.target,
        "observations": sample.observations.tolist(),
        "captions": sample.captions,
    }
    return json.dumps(rec, separators=(",", ":"))


def dataset_bytes(samples: list[Sample]) -> bytes:
    return ("\n".join(_record(s) for s in samples) + "\n").encode("utf-8")


def save_dataset(samples: list[Sample], path: str) -> None:
    """JSONL, one action per line; `.gz` suffix writes deterministic gzip
    (fixed mtime, so identical corpora give identical bytes)."""
    raw = dataset_bytes(samples)
    if path.endswith(".gz"):
        buf = io.BytesIO()
        with gzip.GzipFile(filename="", mode="wb", fileobj=buf, mtime=0) as gz:
            gz.write(raw)
        payload = buf.getvalue()
    else:
        payload = raw
    with open(path, "wb") as fh:
        fh.write(payload)


def load_dataset(path: str) -> list[Sample]:
    opener = gzip.open if path.endswith(".gz") else open
    samples = []
    try:
        fh = opener(path, "rb")
    except FileNotFoundError as exc:
        raise DataError(f"dataset not found: {path}") from exc
    with fh:
        for line_no, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"line {line_no}: invalid JSON: {exc}") from None
            obs = np.asarray(rec["observations"], dtype=np.float64)
            if obs.ndim != 2 or obs.shape[1] != OBS_DIM:
                raise DataError(f"record {rec.get('id')}: observations must "
                                f"be (T, {OBS_DIM})")
            if not np.isfinite(obs).all():
                raise DataError(f"record {rec.get('id')}: non-finite values")
            captions = rec["captions"]
            if not captions or any(not c for c in captions):
                raise DataError(f"record {rec.get('id')}: empty captions")
            samples.append(Sample(
                id=int(rec["id"]), verb=rec["verb"], object=rec["object"],
                source=rec["source"], target=rec["target"],
                observations=obs,
                captions=[[str(t) for t in c] for c in captions]))
    if not samples:
        raise DataError(f"no records in {path}")
    return samples
