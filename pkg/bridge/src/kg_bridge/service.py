"""FastAPI application implementing the three wire contracts.

Request/response shapes match the consumer bit for bit: /v1/generate returns
exactly n candidates, /v1/embed one vector per text at a constant dimension,
/v1/classify-relation a label from the caller's list or null. Schema
violations come back as 4xx, backend failures as 5xx.
"""
from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .classify import CueRelationClassifier
from .config import BridgeConfig
from .embedder import make_embedder
from .textgen import make_generator


class GenerateRequest(BaseModel):
    role: str
    prompt: str
    images: list[str] = Field(default_factory=list)
    n: int = Field(default=1, ge=1)
    max_tokens: int = Field(default=256, ge=1)
    temperature: float = Field(default=0.0, ge=0.0)
    seed: int = 0


class GenerateResponse(BaseModel):
    candidates: list[str]


class EmbedRequest(BaseModel):
    texts: list[str] = Field(min_length=1)


class EmbedResponse(BaseModel):
    vectors: list[list[float]]


class ClassifyRequest(BaseModel):
    src_text: str
    dst_text: str
    labels: list[str] = Field(min_length=1)


class ClassifyResponse(BaseModel):
    label: str | None
    confidence: float


def create_app(config: BridgeConfig | None = None) -> FastAPI:
    config = config or BridgeConfig()
    app = FastAPI(title="kg-bridge", version="0.1.0")
    generator = make_generator(config.model)
    embedder = make_embedder(config.embedder)
    classifier = CueRelationClassifier()

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "model": config.model, "embedder": config.embedder}

    @app.post("/v1/generate", response_model=GenerateResponse)
    def generate(request: GenerateRequest):
        try:
            candidates = generator.generate(
                request.role, request.prompt, request.n, request.max_tokens, request.temperature, request.seed
            )
        except Exception as exc:  # backend failure, not caller error
            raise HTTPException(status_code=500, detail=str(exc)) from exc
        if len(candidates) != request.n:
            raise HTTPException(status_code=500, detail="backend returned wrong candidate count")
        return GenerateResponse(candidates=candidates)

    @app.post("/v1/embed", response_model=EmbedResponse)
    def embed(request: EmbedRequest):
        try:
            vectors = embedder.embed(request.texts)
        except Exception as exc:
            raise HTTPException(status_code=500, detail=str(exc)) from exc
        return EmbedResponse(vectors=vectors)

    @app.post("/v1/classify-relation", response_model=ClassifyResponse)
    def classify(request: ClassifyRequest):
        label, confidence = classifier.classify(request.src_text, request.dst_text, request.labels)
        return ClassifyResponse(label=label, confidence=confidence)

    return app
