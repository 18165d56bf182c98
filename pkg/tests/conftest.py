import pytest
import torch

from kpset.config import TrainConfig
from kpset.model import SetKeyphraseModel
from kpset.vocab import RESERVED, Vocabulary


@pytest.fixture
def tiny_vocab():
    return Vocabulary(list(RESERVED) + [f"w{i}" for i in range(12)])


@pytest.fixture
def tiny_cfg():
    return TrainConfig(num_slots=4, d_model=16, num_heads=2, ffn_dim=32, vocab_size=20,
                       enc_layers=1, dec_layers=1)


@pytest.fixture
def tiny_model(tiny_vocab, tiny_cfg):
    torch.manual_seed(0)
    return SetKeyphraseModel(tiny_vocab, tiny_cfg)
