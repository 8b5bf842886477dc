from dataclasses import dataclass


@dataclass(frozen=True)
class FinetuneConfig:
    """Fine-tuning hyperparameters.

    ``encoder_name`` is a published checkpoint identifier or a local
    checkpoint directory; weights are never vendored here. The defaults
    follow the standard encoder fine-tuning recipe (AdamW, small constant
    learning rate, a few epochs) and are echoed into the checkpoint
    metadata. With ``freeze_first_epoch`` the encoder only trains from
    epoch 2 on, so set ``epochs >= 2`` for any actual encoder adaptation.
    """

    encoder_name: str
    epochs: int = 3
    batch_size: int = 16
    learning_rate: float = 2e-5
    max_sequence_length: int = 256
    seed: int = 0
    freeze_first_epoch: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.max_sequence_length < 2:
            raise ValueError("max_sequence_length must be >= 2")

    def as_dict(self) -> dict:
        return {
            "encoder_name": self.encoder_name,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "max_sequence_length": self.max_sequence_length,
            "seed": self.seed,
            "freeze_first_epoch": self.freeze_first_epoch,
        }
