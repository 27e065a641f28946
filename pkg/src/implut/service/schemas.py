"""Pydantic request/response models for the HTTP service."""

from pydantic import BaseModel, Field


class UploadResponse(BaseModel):
    id: str
    width: int
    height: int


class ModelInfo(BaseModel):
    filters: list[str]
    j: int
    lut_n: int
    checkpoint_version: int
    has_predictor: bool


class PredictResponse(BaseModel):
    w: dict[str, float]


class EnhanceRequest(BaseModel):
    # w is either a list of J floats or a {filter name: value} mapping;
    # values outside [-1, 1] are rejected with 400, not clamped.
    w: list[float] | dict[str, float]
    preview_width: int | None = Field(default=None, ge=1)


class WRequest(BaseModel):
    w: list[float] | dict[str, float]


class ScoresResponse(BaseModel):
    scores: dict[str, float]
    used_external: bool
    analytic_fallback: bool


class ErrorResponse(BaseModel):
    detail: str
