"""Social-determinants-of-health annotation pipeline.

Subpackages, by pipeline stage:

- ``taxonomy``   the 14-class label hierarchy and definition registry
- ``ingest``     social-history extraction, keyword routing, raw-note pool
- ``gateway``    chat-completion interface with record/replay cassettes
- ``augmenter``  per-label note generation with human verdicts (threshold 0.90)
- ``annotator``  three-step cascaded annotation with rationales
- ``optimizer``  bootstrap-few-shot prompt search by answer exact match
- ``quality``    triple-pass consistency validation
- ``metrics``    F1 / MCC / confidence-interval evaluation statistics
- ``datastore``  records, split plans, composition mixing, SFT exports
- ``service``    HTTP review API (human-verdict transport)
- ``cli``        one subcommand per stage
"""

__version__ = "0.1.0"
