from __future__ import annotations

from collections.abc import Sequence

import torch
from torch import nn

from src.domain.entities.attention import AttentionStack
from src.domain.entities.model_io import DecoderOutput, EmbeddingBundle, ImageSpec
from src.domain.entities.taxonomy import Taxonomy
from src.domain.errors import EncoderUnavailable, IncompleteBundle
from src.domain.model.decoder import MaskDecoder
from src.domain.model.encoders import ToyImageEncoder, ToyTextEncoder
from src.domain.model.heads import (
    FilmHead,
    ProjHead,
    compose_objpart,
    film_modulate,
    final_modulation,
)


class PartSegModel(nn.Module):
    """Object/part-conditioned segmentation model.

    Object and generalized-part names condition the frozen image features through
    FiLM; object-specific parts are composed from both by projection and
    modulated once more before decoding. Channel layout of the logits follows
    ``Taxonomy``: pairs, pair uncategory, objects, object uncategory, parts.
    """

    def __init__(
        self,
        spec: ImageSpec,
        *,
        blocks: int = 2,
        attention_block: int = -1,
        share_film: bool = False,
        upsample: str = "bilinear",
        seed: int = 0,
        text_encoder: ToyTextEncoder | None = None,
        with_text_encoder: bool = True,
    ) -> None:
        super().__init__()
        self.spec = spec
        dim = spec.embed_dim
        if text_encoder is None and with_text_encoder:
            text_encoder = ToyTextEncoder(dim, seed=seed)
        self.text_encoder = text_encoder
        self.image_encoder = ToyImageEncoder(spec, seed=seed)
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            self.film_obj = FilmHead(dim)
            self.film_part = self.film_obj if share_film else FilmHead(dim)
            self.film_objpart = FilmHead(dim)
            self.proj_text = ProjHead(dim)
            self.proj_image = ProjHead(dim)
            bg = torch.randn(2, dim)
            self.bg_text = nn.Parameter(bg / bg.norm(dim=-1, keepdim=True))
            self.decoder = MaskDecoder(
                dim, spec.factor, blocks=blocks, attention_block=attention_block, upsample=upsample
            )

    # --------- encoders (frozen) ---------
    def encode_text(self, names: Sequence[str]) -> torch.Tensor:
        if self.text_encoder is None:
            raise EncoderUnavailable("Model was built without a text encoder")
        return self.text_encoder(names, dtype=self.bg_text.dtype).to(self.bg_text.device)

    def encode_image(self, images: torch.Tensor) -> torch.Tensor:
        return self.image_encoder(images.to(self.bg_text.dtype))

    # --------- conditioning pipeline ---------
    def embed(self, images: torch.Tensor, taxonomy: Taxonomy) -> EmbeddingBundle:
        text_obj = self.encode_text(taxonomy.objects)
        text_part = self.encode_text(taxonomy.parts)
        feat = self.encode_image(images)
        img_obj = film_modulate(feat[:, None], text_obj, self.film_obj)
        img_part = film_modulate(feat[:, None], text_part, self.film_part)

        oi = torch.as_tensor(taxonomy.pair_to_object(), device=feat.device)
        pi = torch.as_tensor(taxonomy.pair_to_part(), device=feat.device)
        text_objpart = compose_objpart(text_obj[oi], text_part[pi], self.proj_text)
        img_objpart = compose_objpart(img_obj[:, oi], img_part[:, pi], self.proj_image)
        final = final_modulation(img_objpart, text_objpart, self.film_objpart)

        bg_pair = film_modulate(feat, self.bg_text[0], self.film_objpart)
        bg_obj = film_modulate(feat, self.bg_text[1], self.film_obj)
        return EmbeddingBundle(
            text_obj=text_obj,
            text_part=text_part,
            text_objpart=text_objpart,
            img_feat=feat,
            img_obj=img_obj,
            img_part=img_part,
            img_objpart=img_objpart,
            final_objpart=final,
            background=torch.stack([bg_pair, bg_obj], dim=1),
        )

    def decode(self, bundle: EmbeddingBundle) -> DecoderOutput:
        self._check_bundle(bundle)
        n_pairs = bundle.final_objpart.shape[1]
        n_obj = bundle.img_obj.shape[1]
        grids = torch.cat(
            [
                bundle.final_objpart,
                bundle.background[:, 0:1],
                bundle.img_obj,
                bundle.background[:, 1:2],
                bundle.img_part,
            ],
            dim=1,
        )
        logits, attn = self.decoder(grids)
        stack = AttentionStack(
            obj=attn[:, n_pairs + 1 : n_pairs + 1 + n_obj],
            part=attn[:, n_pairs + 2 + n_obj :],
        )
        return DecoderOutput(mask_logits=logits, attention=stack)

    def forward(self, images: torch.Tensor, taxonomy: Taxonomy) -> DecoderOutput:
        return self.decode(self.embed(images, taxonomy))

    @staticmethod
    def _check_bundle(bundle: EmbeddingBundle) -> None:
        fields = vars(bundle)
        missing = [k for k, v in fields.items() if v is None]
        if missing:
            raise IncompleteBundle(f"Missing embeddings: {missing}")
        checks = {
            "img_obj": (bundle.img_obj.shape[1], bundle.text_obj.shape[0]),
            "img_part": (bundle.img_part.shape[1], bundle.text_part.shape[0]),
            "final_objpart": (bundle.final_objpart.shape[1], bundle.text_objpart.shape[0]),
            "background": (bundle.background.shape[1], 2),
        }
        for name, (got, want) in checks.items():
            if got != want:
                raise IncompleteBundle(f"{name} has {got} entries, expected {want}")

    # --------- parameter groups ---------
    def trainable_parameters(self) -> list[nn.Parameter]:
        frozen = {id(p) for p in self.frozen_parameters()}
        seen: set[int] = set()
        params = []
        for p in self.parameters():
            if id(p) in frozen or id(p) in seen or not p.requires_grad:
                continue
            seen.add(id(p))
            params.append(p)
        return params

    def frozen_parameters(self) -> list[nn.Parameter]:
        params = list(self.image_encoder.parameters())
        if self.text_encoder is not None:
            params.extend(self.text_encoder.parameters())
        return params
