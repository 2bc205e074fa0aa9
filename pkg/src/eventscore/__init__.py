"""Event-level scoring of generated audio against multi-event text prompts.

Three scores per (audio, caption) pair:

* EOS: lowest audio-text similarity between each described event and its
  separated stem.
* ESS: Kendall-style agreement between the described event order and the
  onsets detected in the separated stems.
* AHQ: expected quality class (1..4) from a small classifier over the
  whole-clip audio embedding.

Pools of scored audios become ranked preference pairs (:mod:`.dataset`), and
:mod:`.evalharness` implements the caption-discrimination, Segment F1,
correlation and win-rate protocols.
"""

from .ahq import AhqModel, ahq_predict, ahq_train, load_ahq_model, save_ahq_model
from .audio_io import (
    AudioClip,
    Envelope,
    EventSpan,
    compute_envelope,
    detect_active_span,
    load_wav,
    normalize_envelope,
    write_wav,
)
from .event_text import (
    EventList,
    Relation,
    TemporalRelation,
    compose_caption,
    decompose_caption,
    make_distractor_caption,
    reverse_caption,
)
from .providers import ProviderConfig, RemoteProvider, StubProvider, make_provider, similarity
from .scoring import (
    ScoreConfig,
    ScoreRecord,
    ScoringError,
    event_occurrence_score,
    event_sequence_score,
    score_pair,
)

__version__ = "0.1.0"
