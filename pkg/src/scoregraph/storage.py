"""Bit-exact serialization of graphs, batches, and encoder parameters.

Every file starts with the 4-byte magic ``SGF1`` and a little-endian uint32
manifest length, followed by a canonical-JSON manifest and a binary
payload.  The manifest carries a section table: name, dtype, shape, byte
offset into the payload, byte length, and a CRC32 checksum per section.
Arrays are little-endian (int64 pairs for edges, float32 row-major for
features) so files are byte-stable across little-endian platforms.

A batch container holds one header record (config echo plus the corpus
file names) followed by one record per batch; each record is again
(uint32 length, manifest, payload), so containers can be grown by
appending records.
"""

from __future__ import annotations

import json
import zlib
from pathlib import Path

import numpy as np

from .errors import ChecksumError, FileFormatError
from .graph import EdgeType, GraphOptions, ScoreGraph
from .sampling import Batch, SamplerConfig
from .encoder import EncoderParams, LayerParams

MAGIC = b"SGF1"
FORMAT_VERSION = 1

_DTYPES = {"int64": "<i8", "float32": "<f4"}


def _canonical(arr: np.ndarray, dtype: str) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(arr).astype(_DTYPES[dtype]))


def _manifest_bytes(manifest: dict) -> bytes:
    return json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()


def _pack_sections(arrays: list[tuple[str, str, np.ndarray]]):
    payload = bytearray()
    sections = []
    for name, dtype, arr in arrays:
        arr = _canonical(arr, dtype)
        raw = arr.tobytes()
        sections.append({
            "name": name,
            "dtype": dtype,
            "shape": list(arr.shape),
            "offset": len(payload),
            "nbytes": len(raw),
            "crc32": zlib.crc32(raw) & 0xFFFFFFFF,
        })
        payload.extend(raw)
    return bytes(payload), sections


def _unpack_sections(payload: bytes, sections: list[dict]) -> dict[str, np.ndarray]:
    out = {}
    for sec in sections:
        start, nbytes = sec["offset"], sec["nbytes"]
        if start + nbytes > len(payload):
            raise FileFormatError(f"section {sec['name']!r} is truncated")
        raw = payload[start:start + nbytes]
        if (zlib.crc32(raw) & 0xFFFFFFFF) != sec["crc32"]:
            raise ChecksumError(f"checksum mismatch in section {sec['name']!r}")
        dtype = _DTYPES.get(sec["dtype"])
        if dtype is None:
            raise FileFormatError(f"unknown dtype {sec['dtype']!r}")
        out[sec["name"]] = np.frombuffer(raw, dtype=dtype).reshape(sec["shape"]).copy()
    return out


def _record_bytes(manifest: dict, payload: bytes) -> bytes:
    m = _manifest_bytes(manifest)
    return len(m).to_bytes(4, "little") + m + payload


def _read_record(blob: bytes, pos: int, expect_kind: str | None = None):
    if pos + 4 > len(blob):
        raise FileFormatError("truncated record header")
    mlen = int.from_bytes(blob[pos:pos + 4], "little")
    pos += 4
    if pos + mlen > len(blob):
        raise FileFormatError("truncated manifest")
    try:
        manifest = json.loads(blob[pos:pos + mlen])
    except json.JSONDecodeError as e:
        raise FileFormatError(f"bad manifest JSON: {e.msg}") from e
    pos += mlen
    if manifest.get("format_version") != FORMAT_VERSION:
        raise FileFormatError(
            f"unsupported format version {manifest.get('format_version')!r}")
    if expect_kind is not None and manifest.get("kind") != expect_kind:
        raise FileFormatError(
            f"expected a {expect_kind} record, found {manifest.get('kind')!r}")
    end = pos
    for sec in manifest.get("sections", []):
        end = max(end, pos + sec["offset"] + sec["nbytes"])
    if end > len(blob):
        raise FileFormatError("truncated payload")
    arrays = _unpack_sections(blob[pos:end], manifest.get("sections", []))
    return manifest, arrays, end


def _check_magic(blob: bytes) -> int:
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise FileFormatError("bad file magic")
    return 4


# ---------------------------------------------------------------------------
# graphs
# ---------------------------------------------------------------------------

def _graph_record(graph: ScoreGraph) -> bytes:
    edge_types = [t for t in EdgeType if t in graph.edges]
    arrays = [(f"edges/{t.value}", "int64", graph.edges[t]) for t in edge_types]
    arrays += [
        ("note_features", "float32", graph.note_features),
        ("beat_features", "float32", graph.beat_features),
        ("measure_features", "float32", graph.measure_features),
        ("note_onsets", "int64", graph.note_onsets),
        ("note_pitches", "int64", graph.note_pitches),
        ("beat_spans", "int64", graph.beat_spans),
        ("measure_spans", "int64", graph.measure_spans),
    ]
    payload, sections = _pack_sections(arrays)
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": "graph",
        "divisions_per_quarter": graph.divisions_per_quarter,
        "counts": {"note": graph.note_count, "beat": graph.beat_count,
                   "measure": graph.measure_count},
        "feature_width": graph.feature_width,
        "options": {"inverse_edges": graph.options.inverse_edges,
                    "metrical": graph.options.metrical},
        "source_name": graph.source_name,
        "edge_types": [t.value for t in edge_types],
        "sections": sections,
    }
    return _record_bytes(manifest, payload)


def graph_to_bytes(graph: ScoreGraph) -> bytes:
    return MAGIC + _graph_record(graph)


def write_graph_file(graph: ScoreGraph, path: str | Path) -> None:
    Path(path).write_bytes(graph_to_bytes(graph))


def graph_from_record(manifest: dict, arrays: dict[str, np.ndarray]) -> ScoreGraph:
    counts = manifest["counts"]
    options = GraphOptions(**manifest["options"])
    edges = {EdgeType(name): arrays[f"edges/{name}"]
             for name in manifest["edge_types"]}
    return ScoreGraph(
        note_count=counts["note"], beat_count=counts["beat"],
        measure_count=counts["measure"], edges=edges,
        note_features=arrays["note_features"],
        beat_features=arrays["beat_features"],
        measure_features=arrays["measure_features"],
        note_onsets=arrays["note_onsets"],
        note_pitches=arrays["note_pitches"],
        beat_spans=arrays["beat_spans"],
        measure_spans=arrays["measure_spans"],
        divisions_per_quarter=manifest["divisions_per_quarter"],
        options=options, source_name=manifest.get("source_name", ""))


def read_graph_file(path: str | Path) -> ScoreGraph:
    blob = Path(path).read_bytes()
    pos = _check_magic(blob)
    manifest, arrays, _ = _read_record(blob, pos, expect_kind="graph")
    return graph_from_record(manifest, arrays)


def load_graph_dir(directory: str | Path,
                   pattern: str = "*.graph") -> tuple[list[str], list[ScoreGraph]]:
    """Load every graph file in a directory, sorted by file name."""
    paths = sorted(Path(directory).glob(pattern))
    return [p.name for p in paths], [read_graph_file(p) for p in paths]


# ---------------------------------------------------------------------------
# batches
# ---------------------------------------------------------------------------

def config_to_dict(cfg: SamplerConfig) -> dict:
    return {
        "target_size": cfg.target_size,
        "scores_per_batch": cfg.scores_per_batch,
        "fanouts": [f if f is not None else None for f in cfg.fanouts],
        "seed": cfg.seed,
        "include_metrical": cfg.include_metrical,
    }


def config_from_dict(doc: dict) -> SamplerConfig:
    return SamplerConfig(
        target_size=doc["target_size"],
        scores_per_batch=doc["scores_per_batch"],
        fanouts=tuple(doc["fanouts"]),
        seed=doc["seed"],
        include_metrical=doc["include_metrical"])


def _batch_record(batch: Batch) -> bytes:
    edge_types = [t for t in EdgeType if t in batch.edges]
    arrays = [(f"edges/{t.value}", "int64", batch.edges[t]) for t in edge_types]
    arrays += [
        ("note_features", "float32", batch.note_features),
        ("beat_features", "float32", batch.beat_features),
        ("measure_features", "float32", batch.measure_features),
        ("note_onsets", "int64", batch.note_onsets),
        ("note_pitches", "int64", batch.note_pitches),
        ("target_ids", "int64", batch.target_ids),
        ("score_records", "int64", batch.score_records),
    ]
    payload, sections = _pack_sections(arrays)
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": "batch",
        "batch_index": batch.batch_index,
        "counts": {"note": batch.note_count, "beat": batch.beat_count,
                   "measure": batch.measure_count},
        "feature_width": batch.feature_width,
        "total_targets": batch.total_targets,
        "config": config_to_dict(batch.config),
        "edge_types": [t.value for t in edge_types],
        "sections": sections,
    }
    return _record_bytes(manifest, payload)


def batch_from_record(manifest: dict, arrays: dict[str, np.ndarray]) -> Batch:
    edges = {EdgeType(name): arrays[f"edges/{name}"]
             for name in manifest["edge_types"]}
    return Batch(
        edges=edges,
        note_features=arrays["note_features"],
        beat_features=arrays["beat_features"],
        measure_features=arrays["measure_features"],
        note_onsets=arrays["note_onsets"],
        note_pitches=arrays["note_pitches"],
        target_ids=arrays["target_ids"],
        score_records=arrays["score_records"],
        config=config_from_dict(manifest["config"]),
        batch_index=manifest["batch_index"])


def write_batch_container(path: str | Path, batches: list[Batch],
                          cfg: SamplerConfig, corpus_names: list[str]) -> None:
    header = {
        "format_version": FORMAT_VERSION,
        "kind": "batch_container",
        "config": config_to_dict(cfg),
        "corpus": list(corpus_names),
        "num_batches": len(batches),
        "sections": [],
    }
    blob = bytearray(MAGIC)
    blob.extend(_record_bytes(header, b""))
    for batch in batches:
        blob.extend(_batch_record(batch))
    Path(path).write_bytes(bytes(blob))


def read_batch_container(path: str | Path):
    """Returns (config, corpus names, batches)."""
    blob = Path(path).read_bytes()
    pos = _check_magic(blob)
    header, _, pos = _read_record(blob, pos, expect_kind="batch_container")
    batches = []
    while pos < len(blob):
        manifest, arrays, pos = _read_record(blob, pos, expect_kind="batch")
        batches.append(batch_from_record(manifest, arrays))
    if header["num_batches"] != len(batches):
        raise FileFormatError(
            f"container announces {header['num_batches']} batches, "
            f"found {len(batches)}")
    return config_from_dict(header["config"]), header["corpus"], batches


# ---------------------------------------------------------------------------
# encoder params
# ---------------------------------------------------------------------------

def write_params_file(params: EncoderParams, path: str | Path) -> None:
    arrays = []
    for i, layer in enumerate(params.layers):
        for etype in params.relations:
            arrays.append((f"layer{i}/w/{etype.value}", "float32",
                           layer.weights[etype]))
        arrays.append((f"layer{i}/self", "float32", layer.self_weight))
    payload, sections = _pack_sections(arrays)
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": "params",
        "activation": params.activation,
        "relations": [t.value for t in params.relations],
        "d_in": params.d_in,
        "hidden": params.hidden,
        "num_layers": params.num_layers,
        "sections": sections,
    }
    Path(path).write_bytes(MAGIC + _record_bytes(manifest, payload))


def read_params_file(path: str | Path) -> EncoderParams:
    blob = Path(path).read_bytes()
    pos = _check_magic(blob)
    manifest, arrays, _ = _read_record(blob, pos, expect_kind="params")
    relations = tuple(EdgeType(name) for name in manifest["relations"])
    layers = []
    for i in range(manifest["num_layers"]):
        weights = {t: arrays[f"layer{i}/w/{t.value}"] for t in relations}
        layers.append(LayerParams(weights=weights,
                                  self_weight=arrays[f"layer{i}/self"]))
    return EncoderParams(layers=tuple(layers),
                         activation=manifest["activation"],
                         relations=relations,
                         d_in=manifest["d_in"], hidden=manifest["hidden"])
