"""HTTP oracle service: any in-process oracle served over the wire protocol
(POST /classify, GET /health) so remote clients and the engine's HTTP
transport can be exercised against a local classifier."""
from __future__ import annotations

import base64
import binascii

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, ConfigDict, Field

from .errors import UnsupportedFormat
from .image import decode_png
from .ledger import QueryLedger
from .oracle import Oracle


class ClassifyRequest(BaseModel):
    id: str
    image_png_b64: str
    top_k: int = Field(default=1, ge=1)


class LabelOut(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    class_index: int = Field(alias="class")
    prob: float


class ClassifyResponse(BaseModel):
    id: str
    labels: list[LabelOut]


class HealthOut(BaseModel):
    model: str
    side: int
    classes: int


def build_app(oracle: Oracle, model_name: str = "toy") -> FastAPI:
    app = FastAPI(title="procnoise oracle service")
    ledger = QueryLedger(None)

    @app.get("/health", response_model=HealthOut)
    def health() -> HealthOut:
        if oracle.side is None or oracle.classes is None:
            raise HTTPException(status_code=503, detail="oracle metadata not available")
        return HealthOut(model=model_name, side=oracle.side, classes=oracle.classes)

    @app.post("/classify", response_model=ClassifyResponse)
    def classify(req: ClassifyRequest) -> ClassifyResponse:
        try:
            raw = base64.b64decode(req.image_png_b64, validate=True)
        except (binascii.Error, ValueError) as e:
            raise HTTPException(status_code=400, detail=f"invalid base64 payload: {e}") from e
        try:
            image = decode_png(raw)
        except UnsupportedFormat as e:
            raise HTTPException(status_code=400, detail=str(e)) from e
        if oracle.side is not None and image.side != oracle.side:
            raise HTTPException(
                status_code=422,
                detail=f"expected {oracle.side}x{oracle.side} image, got {image.side}x{image.side}",
            )
        try:
            verdict = oracle.classify(image, req.top_k, ledger)
        except Exception as e:
            raise HTTPException(status_code=500, detail=f"inference failed: {e}") from e
        labels = [LabelOut(class_index=c, prob=p) for c, p in (verdict.probs or [])]
        return ClassifyResponse(id=req.id, labels=labels)

    return app


def serve(oracle: Oracle, host: str, port: int, model_name: str = "toy") -> None:
    import uvicorn

    uvicorn.run(build_app(oracle, model_name), host=host, port=port, log_level="warning")
