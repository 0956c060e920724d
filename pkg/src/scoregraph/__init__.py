"""scoregraph: heterogeneous graphs and mini-batch sampling for symbolic scores."""

from .errors import (AssemblyError, ChecksumError, ConfigError, FileFormatError,
                     MidiWarning, ParseError, ScoreGraphError,
                     UnsupportedMeterError, ValidationError)
from .score import (Note, Score, TimeSigEvent, Violation, parse_midi,
                    parse_note_json, serialize_note_json, sort_score,
                    validate_score)
from .graph import (BASE_NOTE_RELATIONS, EdgeType, FEATURE_WIDTH, GraphOptions,
                    NOTE_RELATIONS, ScoreGraph, add_inverse_edges,
                    aggregate_metrical_features, attach_metrical_nodes,
                    build_metrical_grid, build_note_edges,
                    build_note_edges_reference, build_score_graph,
                    compute_note_features)
from .sampling import (Batch, LayeredSubgraph, SamplerConfig, TargetWindow,
                       UNBOUNDED, assemble_batch, extend_metrical, iter_epoch,
                       sample_batch, sample_corpus_batches, sample_khop,
                       sample_target_window, unfold_targets)
from .encoder import (EncoderParams, LayerParams, encoder_forward, init_params,
                      onset_pool, sage_layer_forward)
from .storage import (load_graph_dir, read_batch_container, read_graph_file,
                      read_params_file, write_batch_container, write_graph_file,
                      write_params_file)
from .synth import synthetic_score

__version__ = "0.1.0"

__all__ = [
    "AssemblyError", "BASE_NOTE_RELATIONS", "Batch", "ChecksumError",
    "ConfigError", "EdgeType", "EncoderParams", "FEATURE_WIDTH",
    "FileFormatError", "GraphOptions", "LayerParams", "LayeredSubgraph",
    "MidiWarning", "NOTE_RELATIONS", "Note", "ParseError", "SamplerConfig",
    "Score", "ScoreGraph", "ScoreGraphError", "TargetWindow", "TimeSigEvent",
    "UNBOUNDED", "UnsupportedMeterError", "ValidationError", "Violation",
    "add_inverse_edges", "aggregate_metrical_features", "assemble_batch",
    "attach_metrical_nodes", "build_metrical_grid", "build_note_edges",
    "build_note_edges_reference", "build_score_graph", "compute_note_features",
    "encoder_forward", "extend_metrical", "init_params", "iter_epoch",
    "load_graph_dir", "onset_pool", "parse_midi", "parse_note_json",
    "read_batch_container", "read_graph_file", "read_params_file",
    "sage_layer_forward", "sample_batch", "sample_corpus_batches",
    "sample_khop", "sample_target_window", "serialize_note_json", "sort_score",
    "synthetic_score", "unfold_targets", "validate_score",
    "write_batch_container", "write_graph_file", "write_params_file",
]
