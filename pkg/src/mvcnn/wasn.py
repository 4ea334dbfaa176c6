"""Node-to-server offload simulator with a framed spectrum protocol.

Nodes preprocess audio locally (high-pass, silence removal,
segmentation, FFT, bin averaging) and upload one framed message per
window. A star topology relays non-hub traffic through node 1. During a
node's link outage, or a server outage, messages are classified on the
node by a reduced-class fallback model; otherwise the server model
classifies them. Everything is a pure function of (scenario, models):
no wall clock, no global state.

Message frame: magic "SPM1", u16 node id, u32 sequence, u64 timestamp
(ms, node clock), u32 feature count, f32 payload, u32 CRC32 over all
preceding bytes. Little-endian throughout.

Scenario files are plain text: `key = value` lines, `[node N]`
sections, `start..end` millisecond ranges for outages, `#` comments.
Repeatable keys: `server_outage` (top level) and `link_outage` (per
node).
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, replace
from math import ceil

import numpy as np

from .audio import AudioClip, SilenceConfig, remove_silence, segment
from .errors import (
    BadMagic,
    CrcMismatch,
    InvalidScenario,
    LengthMismatch,
    Truncated,
)
from .evaluation import SyntheticSpec, generate_synthetic
from .model import ModelConfig, MultiViewCnn, TrainConfig, build, forward, train
from .spectral import (
    fit_normalizer,
    highpass_butterworth,
    normalize,
    spectrum_features,
)

SPM_MAGIC = b"SPM1"
_HEADER_FMT = "<4sHIQI"
_HEADER_LEN = struct.calcsize(_HEADER_FMT)  # 22 bytes

ORIGIN_SERVER = "server"
ORIGIN_FALLBACK = "node_fallback"


@dataclass(frozen=True)
class SpectrumMessage:
    """One preprocessed window on its way to the classifier."""

    node_id: int
    sequence_no: int
    timestamp_ms: int
    payload: np.ndarray  # f32

    def __post_init__(self):
        object.__setattr__(
            self, "payload", np.asarray(self.payload, dtype=np.float32)
        )

    @property
    def feature_len(self) -> int:
        return len(self.payload)


def encode(msg: SpectrumMessage) -> bytes:
    """Frame a message: header, f32 payload, CRC32 of everything before it."""
    body = struct.pack(
        _HEADER_FMT, SPM_MAGIC, msg.node_id, msg.sequence_no,
        msg.timestamp_ms, msg.feature_len,
    ) + msg.payload.astype("<f4").tobytes()
    return body + struct.pack("<I", zlib.crc32(body))


def decode(blob: bytes) -> SpectrumMessage:
    """Parse and verify a frame produced by encode().

    Raises:
        Truncated: fewer bytes than the declared layout.
        BadMagic: wrong leading magic.
        CrcMismatch: checksum does not cover the content.
    """
    if len(blob) < _HEADER_LEN + 4:
        raise Truncated(f"frame of {len(blob)} bytes is shorter than any message")
    magic, node_id, seq, ts, feature_len = struct.unpack_from(_HEADER_FMT, blob, 0)
    if magic != SPM_MAGIC:
        raise BadMagic(f"expected {SPM_MAGIC!r}, got {magic!r}")
    total = _HEADER_LEN + 4 * feature_len + 4
    if len(blob) < total:
        raise Truncated(f"need {total} bytes for {feature_len} features, got {len(blob)}")
    if len(blob) > total:
        raise ValueError(f"{len(blob) - total} bytes of trailing garbage")
    (crc,) = struct.unpack_from("<I", blob, total - 4)
    if crc != zlib.crc32(blob[: total - 4]):
        raise CrcMismatch("checksum failure")
    payload = np.frombuffer(blob, dtype="<f4", count=feature_len, offset=_HEADER_LEN)
    return SpectrumMessage(node_id, seq, ts, payload.copy())


# --- node pipeline ---

@dataclass(frozen=True)
class NodeConfig:
    node_id: int
    feature_len: int = 512
    window_len: int = 2**14
    overlap: float = 0.5
    silence: SilenceConfig = SilenceConfig()
    highpass_hz: float = 200.0
    highpass_order: int = 4


def node_process(
    clip: AudioClip, cfg: NodeConfig, start_ms: int = 0, seq_start: int = 0
) -> list[SpectrumMessage]:
    """Local preprocessing chain: one message per surviving window.

    High-pass filter, silence removal, sliding-window segmentation,
    Hamming windowing, FFT magnitudes, bin averaging. Message timestamps
    mark when each window is fully captured, relative to start_ms.
    """
    filtered = highpass_butterworth(clip, cfg.highpass_hz, cfg.highpass_order)
    active = remove_silence(filtered, cfg.silence)
    if len(active) == 0:
        return []
    frames = segment(active, cfg.window_len, cfg.overlap)
    if not frames:
        return []
    features = spectrum_features(frames, cfg.feature_len)
    messages = []
    for i, frame in enumerate(frames):
        end_sample = frame.start_offset + cfg.window_len
        ts = start_ms + int(round(1000.0 * end_sample / clip.sample_rate))
        messages.append(
            SpectrumMessage(cfg.node_id, seq_start + i, ts, features[i])
        )
    return messages


# --- classification records ---

@dataclass
class ClassificationRecord:
    node_id: int
    sequence_no: int
    timestamp_ms: int
    origin: str  # ORIGIN_SERVER or ORIGIN_FALLBACK
    predicted: int
    probabilities: np.ndarray
    latency_ms: int


def server_classify(
    msg: SpectrumMessage, model: MultiViewCnn, latency_ms: int = 0
) -> ClassificationRecord:
    """Normalize a message payload with the model's statistics and classify.

    Raises:
        LengthMismatch: payload length differs from the model input.
    """
    if msg.feature_len != model.config.input_len:
        raise LengthMismatch(
            f"payload has {msg.feature_len} features, model wants "
            f"{model.config.input_len}"
        )
    probs = forward(model, normalize(msg.payload.astype(np.float64), model.norm_stats))
    return ClassificationRecord(
        msg.node_id, msg.sequence_no, msg.timestamp_ms, ORIGIN_SERVER,
        int(np.argmax(probs)), probs, latency_ms,
    )


# --- scenario ---

@dataclass(frozen=True)
class NodeSpec:
    clock_skew_ms: int = 0
    fallback_classes: tuple = ()
    link_outages: tuple = ()  # (start_ms, end_ms) half-open windows


@dataclass(frozen=True)
class Scenario:
    n_nodes: int = 5
    clips_per_node: int = 2
    clip_seconds: float = 2.0
    sample_rate: int = 24000
    n_classes: int = 4
    feature_len: int = 512
    window_len: int = 2**14
    overlap: float = 0.5
    silence_threshold: float = 0.03
    highpass_hz: float = 200.0
    inter_clip_gap_ms: int = 250
    link_latency_ms: int = 10
    node_proc_ms: int = 35
    server_proc_ms: int = 15
    fallback_proc_ms: int = 40
    max_skew_ms: int = 25
    fallback_policy: str = "local"  # or "buffer": hold and forward after outage
    server_outages: tuple = ()
    nodes: tuple = ()  # NodeSpec per node, padded to n_nodes
    seed: int = 0

    def __post_init__(self):
        nodes = list(self.nodes) + [
            NodeSpec() for _ in range(self.n_nodes - len(self.nodes))
        ]
        object.__setattr__(self, "nodes", tuple(nodes[: self.n_nodes]))

    def validate(self):
        if self.n_nodes < 1 or self.clips_per_node < 1:
            raise InvalidScenario("need at least one node and one clip per node")
        if self.clip_seconds <= 0 or self.sample_rate <= 0:
            raise InvalidScenario("clip_seconds and sample_rate must be positive")
        if self.fallback_policy not in ("local", "buffer"):
            raise InvalidScenario(
                f"fallback_policy must be 'local' or 'buffer', "
                f"got {self.fallback_policy!r}"
            )
        for start, end in self.server_outages:
            if not 0 <= start < end:
                raise InvalidScenario(f"bad server outage window {start}..{end}")
        for i, node in enumerate(self.nodes, start=1):
            if abs(node.clock_skew_ms) > self.max_skew_ms:
                raise InvalidScenario(
                    f"node {i} skew {node.clock_skew_ms} exceeds "
                    f"+/-{self.max_skew_ms} ms sync accuracy"
                )
            for start, end in node.link_outages:
                if not 0 <= start < end:
                    raise InvalidScenario(f"bad link outage {start}..{end} on node {i}")
            if any(c < 0 for c in node.fallback_classes):
                raise InvalidScenario(f"negative fallback class on node {i}")
            if node.fallback_classes and len(set(node.fallback_classes)) < 2:
                raise InvalidScenario(
                    f"node {i} needs at least two distinct fallback classes"
                )
        return self


def _parse_range(text, what):
    parts = text.split("..")
    if len(parts) != 2:
        raise InvalidScenario(f"{what}: expected start..end, got {text!r}")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise InvalidScenario(f"{what}: {exc}") from None


_SCENARIO_FIELDS = {
    "fallback_policy": ("fallback_policy", str),
    "nodes": ("n_nodes", int),
    "clips_per_node": ("clips_per_node", int),
    "clip_seconds": ("clip_seconds", float),
    "sample_rate": ("sample_rate", int),
    "n_classes": ("n_classes", int),
    "feature_len": ("feature_len", int),
    "window_len": ("window_len", int),
    "overlap": ("overlap", float),
    "silence_threshold": ("silence_threshold", float),
    "highpass_hz": ("highpass_hz", float),
    "inter_clip_gap_ms": ("inter_clip_gap_ms", int),
    "link_latency_ms": ("link_latency_ms", int),
    "node_proc_ms": ("node_proc_ms", int),
    "server_proc_ms": ("server_proc_ms", int),
    "fallback_proc_ms": ("fallback_proc_ms", int),
    "max_skew_ms": ("max_skew_ms", int),
    "seed": ("seed", int),
}


def parse_scenario(text: str) -> Scenario:
    """Parse the key-value scenario format; see the module docstring."""
    top = {}
    server_outages = []
    node_sections = {}
    current = None  # None = top level, else node number
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise InvalidScenario(f"line {lineno}: unterminated section header")
            parts = line[1:-1].split()
            if len(parts) != 2 or parts[0] != "node":
                raise InvalidScenario(f"line {lineno}: expected [node N]")
            try:
                current = int(parts[1])
            except ValueError:
                raise InvalidScenario(f"line {lineno}: bad node number") from None
            node_sections.setdefault(current, {"outages": [], "fields": {}})
            continue
        if "=" not in line:
            raise InvalidScenario(f"line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if current is None:
            if key == "server_outage":
                server_outages.append(_parse_range(value, f"line {lineno}"))
            elif key in _SCENARIO_FIELDS:
                name, cast = _SCENARIO_FIELDS[key]
                try:
                    top[name] = cast(value)
                except ValueError as exc:
                    raise InvalidScenario(f"line {lineno}: {exc}") from None
            else:
                raise InvalidScenario(f"line {lineno}: unknown key {key!r}")
        else:
            section = node_sections[current]
            if key == "link_outage":
                section["outages"].append(_parse_range(value, f"line {lineno}"))
            elif key == "clock_skew_ms":
                section["fields"]["clock_skew_ms"] = int(value)
            elif key == "fallback_classes":
                section["fields"]["fallback_classes"] = tuple(
                    int(v) for v in value.split(",") if v.strip()
                )
            else:
                raise InvalidScenario(f"line {lineno}: unknown node key {key!r}")

    n_nodes = top.get("n_nodes", 5)
    for num in node_sections:
        if not 1 <= num <= n_nodes:
            raise InvalidScenario(f"section [node {num}] outside 1..{n_nodes}")
    nodes = []
    for num in range(1, n_nodes + 1):
        section = node_sections.get(num, {"outages": [], "fields": {}})
        nodes.append(
            NodeSpec(link_outages=tuple(section["outages"]), **section["fields"])
        )
    return Scenario(
        server_outages=tuple(server_outages), nodes=tuple(nodes), **top
    ).validate()


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


# --- simulation ---

@dataclass
class SimulationResult:
    records: list
    events: list  # (time_ms, description), sorted by time


def _in_any(t: int, windows) -> bool:
    return any(start <= t < end for start, end in windows)


def _release_time(t: int, windows) -> int:
    """Earliest time >= t outside every (possibly overlapping) window."""
    moved = True
    while moved:
        moved = False
        for start, end in windows:
            if start <= t < end:
                t = end
                moved = True
    return t


def scenario_clips(scenario: Scenario):
    """Per-node clip lists (round-robin classes), deterministic per seed."""
    total = scenario.n_nodes * scenario.clips_per_node
    per_class = ceil(total / scenario.n_classes)
    dataset = generate_synthetic(
        SyntheticSpec(
            n_classes=scenario.n_classes,
            clips_per_class=per_class,
            clip_seconds=scenario.clip_seconds,
            sample_rate=scenario.sample_rate,
            seed=scenario.seed,
        )
    )
    by_node = []
    for node_index in range(scenario.n_nodes):
        clips = []
        for j in range(scenario.clips_per_node):
            g = node_index * scenario.clips_per_node + j
            cls = g % scenario.n_classes
            clips.append(dataset.clips[cls * per_class + g // scenario.n_classes])
        by_node.append(clips)
    return by_node


def simulate(
    scenario: Scenario,
    server_model: MultiViewCnn,
    fallback_models: dict | None = None,
) -> SimulationResult:
    """Run the offload loop over simulated time.

    Messages whose true production time falls inside one of their
    node's link outages or a server outage are classified by that
    node's fallback model (predictions mapped back to global class
    ids); all others go to the server. Under fallback_policy="buffer"
    the node instead holds such messages and forwards them to the
    server when the outage clears, paying the wait as latency. Recorded
    timestamps carry the node clock skew, but routing uses true
    simulated time. Records come back sorted by (node, sequence):
    in-order reliable delivery.

    Raises:
        InvalidScenario: inconsistent scenario, missing/ill-fitted
        fallback model for a node that needs one, or feature length
        mismatch with the server model.
    """
    scenario.validate()
    fallback_models = fallback_models or {}
    if scenario.feature_len != server_model.config.input_len:
        raise InvalidScenario(
            f"scenario feature_len {scenario.feature_len} != server model "
            f"input {server_model.config.input_len}"
        )
    for num, fb in fallback_models.items():
        subset = scenario.nodes[num - 1].fallback_classes
        if not subset:
            raise InvalidScenario(f"node {num} has a fallback model but no classes")
        if any(c >= server_model.config.n_classes for c in subset):
            raise InvalidScenario(
                f"node {num} fallback classes {subset} exceed the server's "
                f"{server_model.config.n_classes}"
            )
        if fb.config.n_classes != len(subset):
            raise InvalidScenario(
                f"node {num} fallback model covers {fb.config.n_classes} classes, "
                f"scenario lists {len(subset)}"
            )

    node_cfgs = [
        NodeConfig(
            node_id=num,
            feature_len=scenario.feature_len,
            window_len=scenario.window_len,
            overlap=scenario.overlap,
            silence=SilenceConfig(threshold=scenario.silence_threshold),
            highpass_hz=scenario.highpass_hz,
        )
        for num in range(1, scenario.n_nodes + 1)
    ]

    clip_ms = int(round(scenario.clip_seconds * 1000))
    records = []
    events = []
    for start, end in scenario.server_outages:
        events.append((start, "server_down"))
        events.append((end, "server_up"))

    for num, (cfg, clips) in enumerate(zip(node_cfgs, scenario_clips(scenario)),
                                       start=1):
        spec = scenario.nodes[num - 1]
        for start, end in spec.link_outages:
            events.append((start, f"link_down node={num}"))
            events.append((end, f"link_up node={num}"))
        hops = 1 if num == 1 else 2
        t_clip = 0
        seq = 0
        for clip in clips:
            messages = node_process(clip, cfg, start_ms=t_clip, seq_start=seq)
            seq += len(messages)
            t_clip += clip_ms + scenario.inter_clip_gap_ms
            for msg in messages:
                t_true = msg.timestamp_ms
                wire = replace(msg, timestamp_ms=t_true + spec.clock_skew_ms)
                offline = _in_any(t_true, spec.link_outages) or _in_any(
                    t_true, scenario.server_outages
                )
                transit = (
                    scenario.node_proc_ms
                    + hops * scenario.link_latency_ms
                    + scenario.server_proc_ms
                )
                if not offline:
                    records.append(server_classify(wire, server_model, transit))
                elif scenario.fallback_policy == "buffer":
                    held_until = _release_time(
                        t_true,
                        tuple(spec.link_outages) + tuple(scenario.server_outages),
                    )
                    records.append(
                        server_classify(
                            wire, server_model, (held_until - t_true) + transit
                        )
                    )
                else:
                    fb = fallback_models.get(num)
                    if fb is None:
                        raise InvalidScenario(
                            f"node {num} hit an outage at t={t_true} ms but has "
                            "no fallback model"
                        )
                    feats = normalize(
                        wire.payload.astype(np.float64), fb.norm_stats
                    )
                    probs = forward(fb, feats)
                    predicted = spec.fallback_classes[int(np.argmax(probs))]
                    records.append(
                        ClassificationRecord(
                            wire.node_id, wire.sequence_no, wire.timestamp_ms,
                            ORIGIN_FALLBACK, predicted, probs,
                            scenario.node_proc_ms + scenario.fallback_proc_ms,
                        )
                    )

    records.sort(key=lambda r: (r.node_id, r.sequence_no))
    events.sort(key=lambda e: (e[0], e[1]))
    return SimulationResult(records, events)


# --- convenience trainers so a scenario can run end to end ---

def _scenario_training_frames(scenario: Scenario, clips_per_class: int, seed: int):
    """Training frames drawn through the node pipeline, disjoint from the
    clips the simulation itself replays (different seed namespace)."""
    dataset = generate_synthetic(
        SyntheticSpec(
            n_classes=scenario.n_classes,
            clips_per_class=clips_per_class,
            clip_seconds=scenario.clip_seconds,
            sample_rate=scenario.sample_rate,
            seed=seed + 7919,
        )
    )
    cfg = NodeConfig(
        node_id=0,
        feature_len=scenario.feature_len,
        window_len=scenario.window_len,
        overlap=scenario.overlap,
        silence=SilenceConfig(threshold=scenario.silence_threshold),
        highpass_hz=scenario.highpass_hz,
    )
    frames = []
    labels = []
    for clip, label in zip(dataset.clips, dataset.labels):
        msgs = node_process(clip, cfg)
        frames.extend(m.payload.astype(np.float64) for m in msgs)
        labels.extend([int(label)] * len(msgs))
    return np.array(frames), np.array(labels, dtype=np.int64)


def train_server_model(
    scenario: Scenario, iterations: int = 150, clips_per_class: int = 6,
    seed: int = 0,
) -> MultiViewCnn:
    """Train a full-class server model on scenario-matched synthetic data."""
    frames, labels = _scenario_training_frames(scenario, clips_per_class, seed)
    stats = fit_normalizer(frames)
    model = build(
        ModelConfig(
            input_len=scenario.feature_len, n_classes=scenario.n_classes, seed=seed
        )
    )
    train(model, normalize(frames, stats), labels,
          TrainConfig(iterations=iterations, seed=seed))
    model.norm_stats = stats
    return model


def train_fallback_models(
    scenario: Scenario, iterations: int = 80, clips_per_class: int = 6,
    seed: int = 0,
) -> dict:
    """Fallback model per node that declares fallback classes.

    Each is trained on the subset of scenario-matched synthetic frames
    whose labels fall in that node's class list, remapped to 0..len-1.
    """
    frames, labels = _scenario_training_frames(scenario, clips_per_class, seed)
    models = {}
    for num, spec in enumerate(scenario.nodes, start=1):
        subset = spec.fallback_classes
        if not subset:
            continue
        mask = np.isin(labels, subset)
        remap = {cls: i for i, cls in enumerate(subset)}
        sub_labels = np.array([remap[int(l)] for l in labels[mask]], dtype=np.int64)
        stats = fit_normalizer(frames[mask])
        model = build(
            ModelConfig(
                input_len=scenario.feature_len, n_classes=len(subset),
                seed=seed + num,
            )
        )
        train(model, normalize(frames[mask], stats), sub_labels,
              TrainConfig(iterations=iterations, seed=seed + num))
        model.norm_stats = stats
        models[num] = model
    return models


RECORD_HEADER = "node,sequence,timestamp_ms,origin,predicted,latency_ms"


def write_records_csv(path, result: SimulationResult, meta=()) -> None:
    """Records as CSV; metadata and outage events ride in '#' comments."""
    with open(path, "w", newline="") as fh:
        for line in meta:
            fh.write(f"# {line}\n")
        for t, label in result.events:
            fh.write(f"# event {t} {label}\n")
        fh.write(RECORD_HEADER + "\n")
        for r in result.records:
            fh.write(
                f"{r.node_id},{r.sequence_no},{r.timestamp_ms},{r.origin},"
                f"{r.predicted},{r.latency_ms}\n"
            )
