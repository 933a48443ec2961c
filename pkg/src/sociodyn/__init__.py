"""Social influence on personality and affect states from proximity data.

Pipeline: parse sensor logs and experience-sampling surveys
(:mod:`~sociodyn.data_model`), score and quantize states
(:mod:`~sociodyn.scoring`), build ego windows and contact intensities
(:mod:`~sociodyn.network`), extract transitions
(:mod:`~sociodyn.transitions`), fit GEE logistic models with QICC
selection (:mod:`~sociodyn.gee`) and label influence effects
(:mod:`~sociodyn.influence`). :mod:`~sociodyn.simulator` generates
synthetic corpora with known effects.
"""

__version__ = "0.1.0"

from .config import LEVELS, SLOTS, TERMS, Level, Period, Slot, StateDef, StudyConfig  # noqa: E402

__all__ = [
    "LEVELS",
    "SLOTS",
    "TERMS",
    "Level",
    "Period",
    "Slot",
    "StateDef",
    "StudyConfig",
    "__version__",
]
