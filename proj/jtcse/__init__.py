"""Twin-tower contrastive sentence embeddings, native core."""

# Installed wheels place the extension inside this package; in-tree test runs
# put it on sys.path directly.
try:
    from ._jtcse import (  # noqa: F401
        Embedder,
        JtcseError,
        alignment,
        cael_positions,
        info_nce,
        macs_and_eta,
        spearman,
        synth_corpus,
        tmc_binary,
        tmc_geometric,
        uniformity,
    )
except ImportError:
    from _jtcse import (  # noqa: F401
        Embedder,
        JtcseError,
        alignment,
        cael_positions,
        info_nce,
        macs_and_eta,
        spearman,
        synth_corpus,
        tmc_binary,
        tmc_geometric,
        uniformity,
    )

__all__ = [
    "Embedder",
    "JtcseError",
    "alignment",
    "cael_positions",
    "info_nce",
    "macs_and_eta",
    "spearman",
    "synth_corpus",
    "tmc_binary",
    "tmc_geometric",
    "uniformity",
]
