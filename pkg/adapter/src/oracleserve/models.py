"""Model backends: Hugging Face causal LMs and the mock used for testing.

A backend owns tokenization and windowed conditional scoring; the server
composes it with the strided tiling.  Causal LMs have no distribution for
the first token of a sequence (there is no empty-context forward pass), so
they report scores_first_token=False and the first sequence token is skipped
consistently for canonical and shuffled orderings alike.  The mock model
defines a constant per-token log-probability, including the first token.
"""

from __future__ import annotations

from typing import Sequence

from .strided import strided_score


class ModelBackend:
    name: str = "backend"
    context_length: int = 0
    scores_first_token: bool = False

    def tokenize(self, text: str) -> list[int]:
        raise NotImplementedError

    def window_logprob(self, tokens: Sequence[int], score_from: int) -> float:
        """Sum of log p(token_i | window prefix) over window slots >= score_from."""
        raise NotImplementedError

    def logprob(self, text: str) -> float:
        tokens = self.tokenize(text)
        if not tokens:
            raise ValueError("text produced no tokens")
        return strided_score(self.window_logprob, tokens, self.context_length)

    def logprob_batch(self, texts: Sequence[str]) -> list[float]:
        return [self.logprob(t) for t in texts]


class MockConstantModel(ModelBackend):
    """Byte tokenizer, fixed log-prob per scored token; exact arithmetic."""

    scores_first_token = True

    def __init__(self, constant: float, context_length: int = 16,
                 name: str = "mock-constant"):
        self.constant = constant
        self.context_length = context_length
        self.name = name

    def tokenize(self, text: str) -> list[int]:
        return list(text.encode("utf-8"))

    def window_logprob(self, tokens: Sequence[int], score_from: int) -> float:
        return (len(tokens) - score_from) * self.constant


class CausalLMBackend(ModelBackend):
    """Wraps a transformers causal LM; deterministic inference-mode scoring."""

    scores_first_token = False

    def __init__(self, model_id: str, device: str = "cpu",
                 context_length: int | None = None):
        import torch
        from transformers import AutoModelForCausalLM, AutoTokenizer

        self._torch = torch
        self.tokenizer = AutoTokenizer.from_pretrained(model_id)
        self.model = AutoModelForCausalLM.from_pretrained(model_id)
        self.model.to(device)
        self.model.eval()
        self.device = device
        self.name = model_id
        resolved = context_length
        if resolved is None:
            config = self.model.config
            resolved = getattr(config, "n_positions", None) or getattr(
                config, "max_position_embeddings", None
            )
        if resolved is None or resolved < 2:
            raise ValueError(
                f"cannot resolve a context length >= 2 for {model_id}; "
                f"pass --context-length explicitly"
            )
        self.context_length = int(resolved)

    def tokenize(self, text: str) -> list[int]:
        return self.tokenizer(text, add_special_tokens=False)["input_ids"]

    def window_logprob(self, tokens: Sequence[int], score_from: int) -> float:
        torch = self._torch
        ids = torch.tensor([list(tokens)], dtype=torch.long, device=self.device)
        with torch.inference_mode():
            logits = self.model(ids).logits[0]
        logprobs = torch.log_softmax(logits.double(), dim=-1)
        # logits at position i-1 give p(token_i | tokens_<i); position 0 has
        # no empty-context distribution, hence scores_first_token=False
        start = max(score_from, 1)
        if start >= len(tokens):
            return 0.0
        targets = ids[0, start:]
        picked = logprobs[start - 1 : len(tokens) - 1].gather(
            1, targets.unsqueeze(1)
        )
        return float(picked.sum().item())


def build_backend(model_id: str, device: str = "cpu",
                  context_length: int | None = None) -> ModelBackend:
    """``mock:constant=<v>[,context=<C>][,name=<s>]`` or a HF model id/path."""
    if model_id.startswith("mock:"):
        params = {}
        for part in model_id[len("mock:"):].split(","):
            if not part:
                continue
            if "=" not in part:
                raise ValueError(f"malformed mock spec entry {part!r}")
            key, value = part.split("=", 1)
            params[key.strip()] = value.strip()
        constant = float(params.pop("constant", "-1.0"))
        context = int(params.pop("context", "16"))
        name = params.pop("name", "mock-constant")
        if params:
            raise ValueError(f"unknown mock spec keys: {sorted(params)}")
        if context_length is not None:
            context = context_length
        return MockConstantModel(constant, context_length=context, name=name)
    return CausalLMBackend(model_id, device=device, context_length=context_length)
