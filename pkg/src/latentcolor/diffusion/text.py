"""Small trainable text conditioning stack: vocabulary + self-attention encoder."""

import warnings
from dataclasses import dataclass

import torch
import torch.nn as nn

PAD, NULL, UNK = 0, 1, 2
SPECIALS = ["<pad>", "<null>", "<unk>"]


@dataclass
class TextEmbedding:
    """Encoded caption batch: (B, L, D) vectors plus a validity mask (B, L)."""

    vectors: torch.Tensor
    mask: torch.Tensor


class Vocabulary:
    """Whitespace/lowercase token table with reserved pad, null, and unk slots."""

    def __init__(self, words: list[str]):
        self.tokens = SPECIALS + sorted(set(words) - set(SPECIALS))
        self.index = {w: i for i, w in enumerate(self.tokens)}

    @classmethod
    def build(cls, captions: list[str]) -> "Vocabulary":
        words = []
        for cap in captions:
            words.extend(cap.lower().split())
        return cls(words)

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, caption: str, max_len: int) -> tuple[list[int], list[bool]]:
        """Token ids padded to max_len. Empty captions map to the null token."""
        words = caption.lower().split()
        if not words:
            ids = [NULL]
        else:
            if len(words) > max_len:
                warnings.warn(
                    f"caption truncated from {len(words)} to {max_len} tokens", stacklevel=2
                )
                words = words[:max_len]
            ids = [self.index.get(w, UNK) for w in words]
        mask = [True] * len(ids) + [False] * (max_len - len(ids))
        ids = ids + [PAD] * (max_len - len(ids))
        return ids, mask

    def to_dict(self) -> dict:
        return {"tokens": self.tokens}

    @classmethod
    def from_dict(cls, data: dict) -> "Vocabulary":
        vocab = cls.__new__(cls)
        vocab.tokens = list(data["tokens"])
        vocab.index = {w: i for i, w in enumerate(vocab.tokens)}
        return vocab


class TextEncoder(nn.Module):
    """Learned token + positional embeddings through a 2-layer self-attention stack."""

    def __init__(self, vocab: Vocabulary, dim: int = 64, max_len: int = 16,
                 n_layers: int = 2, n_heads: int = 4):
        super().__init__()
        self.vocab = vocab
        self.dim = dim
        self.max_len = max_len
        self.token_emb = nn.Embedding(len(vocab), dim, padding_idx=PAD)
        self.pos_emb = nn.Parameter(torch.zeros(max_len, dim))
        layer = nn.TransformerEncoderLayer(
            d_model=dim,
            nhead=n_heads,
            dim_feedforward=dim * 4,
            dropout=0.0,
            batch_first=True,
            norm_first=True,
        )
        self.encoder = nn.TransformerEncoder(layer, num_layers=n_layers, enable_nested_tensor=False)
        self.norm = nn.LayerNorm(dim)

    def embed(self, captions: list[str]) -> TextEmbedding:
        ids, masks = [], []
        for cap in captions:
            i, m = self.vocab.encode(cap, self.max_len)
            ids.append(i)
            masks.append(m)
        device = self.token_emb.weight.device
        id_t = torch.tensor(ids, dtype=torch.long, device=device)
        mask_t = torch.tensor(masks, dtype=torch.bool, device=device)
        x = self.token_emb(id_t) + self.pos_emb[None, :, :]
        x = self.encoder(x, src_key_padding_mask=~mask_t)
        return TextEmbedding(self.norm(x), mask_t)

    def forward(self, captions: list[str]) -> TextEmbedding:
        return self.embed(captions)
