"""Open-vocabulary temporal action localization on snippet-feature sequences.

Library layout:
  tensor / optim  - autodiff substrate, AdamW, warmup-cosine schedule
  localizer       - class-agnostic anchor-free pyramid localizer and losses
  classifier      - RoI-Align pooling, prototype classification, score fusion, SoftNMS
  selftrain       - two-stage self-training with pseudo-labels and an EMA teacher
  evalkit         - tIoU, per-class AP, generalized/constrained protocols
  vocabsplit      - stemming-based base/novel category split
  synthbench      - deterministic synthetic benchmarks
  dataio / cli    - feature/annotation/report file formats and the command line
"""

__version__ = "0.1.0"
