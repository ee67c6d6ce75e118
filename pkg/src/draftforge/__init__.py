"""draftforge: police report draft generation from noisy dialogue transcripts.

Modules: transcripts (domain model + error metrics), noise (corruption with
replayable traces), corpus (dialogue simulation + dataset export), backends
(pluggable model roles), drafting (placeholder-gated draft assembly),
workflow (audited review state machine), stats (paired evaluation), service
(HTTP API), cli.
"""

__version__ = "0.1.0"
