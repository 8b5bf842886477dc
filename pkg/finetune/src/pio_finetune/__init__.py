"""Fine-tune a pre-trained contextual text encoder as a P/I/O base learner.

The classifier is the encoder's first-token vector feeding a dense layer
with three logistic outputs, trained with binary cross-entropy-with-logits.
The encoder is frozen for the first epoch and unfrozen afterwards, so only
the head is learned from scratch. Trained checkpoints export probability
interchange files (``id,model,p_P,p_I,p_O``), the only coupling with the
corpus/stacking toolkit.
"""

__version__ = "0.1.0"

from .config import FinetuneConfig
from .data import read_dataset, select_split
from .export import export_probabilities
from .model import EncoderClassifier, load_checkpoint, parameter_checksum
from .train import finetune
