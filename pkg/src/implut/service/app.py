"""FastAPI application wrapping the core enhancement engine.

One process serves one model snapshot.  The snapshot is swapped atomically by
reassigning ``app.state.snapshot``; each request reads it once, so in-flight
work finishes on the snapshot it started with.  Uploaded images live in an
in-memory LRU session store behind a lock; per-request computation is pure.
"""

import collections
import threading
import uuid
import warnings

import numpy as np
from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.middleware.cors import CORSMiddleware

from .. import dataio, lut
from ..checkpoint import load_checkpoint
from ..config import RunConfig
from ..image import ImageBuf
from ..predictor import downscale, predict
from ..scores import (DEFAULT_PROMPTS, ExternalScorer, ExternalScorerError,
                      score_analytic)
from ..transform import FilterParams, MlpFilter
from . import schemas


class ModelSnapshot:
    """Immutable bundle of the transform, predictor and their metadata."""

    def __init__(self, model, predictor=None, checkpoint_version=1, lut_n=33):
        self.model = model
        self.predictor = predictor
        self.checkpoint_version = checkpoint_version
        self.lut_n = lut_n
        self.filter_names = model.filter_names

    def lut_for(self, w: FilterParams):
        # float32 keeps the 35,937 lattice evaluations fast; the fidelity
        # budget for previews is far looser than f32 round-off.
        return lut.bypass(self.model, w, n=self.lut_n, dtype=np.float32)


class Session:
    """One uploaded image plus its cached previews."""

    def __init__(self, image: ImageBuf):
        self.image = image
        self._previews = {}
        self._lock = threading.Lock()

    def preview(self, width: int) -> ImageBuf:
        width = min(width, self.image.width)
        with self._lock:
            cached = self._previews.get(width)
        if cached is not None:
            return cached
        height = max(1, round(self.image.height * width / self.image.width))
        img = downscale(self.image, (height, width))
        with self._lock:
            self._previews[width] = img
        return img


class SessionStore:
    """LRU map of image id -> Session behind a lock."""

    def __init__(self, limit: int = 32):
        self.limit = limit
        self._lock = threading.Lock()
        self._sessions = collections.OrderedDict()

    def add(self, image: ImageBuf) -> str:
        image_id = uuid.uuid4().hex
        with self._lock:
            self._sessions[image_id] = Session(image)
            while len(self._sessions) > self.limit:
                self._sessions.popitem(last=False)
        return image_id

    def get(self, image_id: str) -> Session:
        with self._lock:
            session = self._sessions.get(image_id)
            if session is not None:
                self._sessions.move_to_end(image_id)
        if session is None:
            raise HTTPException(status_code=404, detail="unknown image id")
        return session


def _parse_w(raw, names) -> FilterParams:
    """Validate a request's w into FilterParams; malformed input is a 400."""
    if isinstance(raw, dict):
        unknown = set(raw) - set(names)
        if unknown:
            raise HTTPException(400, "unknown filter name(s): %s"
                                % ", ".join(sorted(unknown)))
        values = [float(raw.get(n, 0.0)) for n in names]
    else:
        values = list(raw)
        if len(values) != len(names):
            raise HTTPException(400, "w must have %d values, got %d"
                                % (len(names), len(values)))
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise HTTPException(400, "w values must be finite numbers")
    if np.any(np.abs(arr) > 1.0):
        raise HTTPException(400, "w values must lie in [-1, 1]")
    return FilterParams(arr, names)


def _parse_w_query(text: str, names) -> FilterParams:
    parts = [p for p in text.split(",") if p != ""]
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise HTTPException(400, "w query must be comma-separated numbers")
    return _parse_w(values, names)


def _apply(snapshot: ModelSnapshot, img: ImageBuf, w: FilterParams) -> ImageBuf:
    if not np.any(w.values):
        return img  # identity guarantee: w = 0 previews are byte-exact
    return lut.lookup(snapshot.lut_for(w), img)


def _png_response(img: ImageBuf, filename: str) -> Response:
    return Response(
        content=dataio.encode_png(img),
        media_type="image/png",
        headers={"Content-Disposition": 'inline; filename="%s"' % filename},
    )


def create_app(checkpoint_path=None, snapshot: ModelSnapshot | None = None,
               run_config: RunConfig | None = None,
               external_scorer: ExternalScorer | None = None) -> FastAPI:
    """Build the service around a checkpoint file or an explicit snapshot."""
    cfg = run_config if run_config is not None else RunConfig()
    if snapshot is None:
        if checkpoint_path is not None:
            ckpt = load_checkpoint(checkpoint_path)
            snapshot = ModelSnapshot(ckpt.model, ckpt.predictor,
                                     lut_n=cfg.lut_n)
        else:
            snapshot = ModelSnapshot(
                MlpFilter(cfg.filter_names, seed=cfg.seed), lut_n=cfg.lut_n)
    if external_scorer is None and cfg.service.scorer_endpoint:
        external_scorer = ExternalScorer(cfg.service.scorer_endpoint)

    app = FastAPI(title="implut service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(cfg.service.cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.snapshot = snapshot
    app.state.sessions = SessionStore(cfg.service.session_limit)
    app.state.config = cfg
    app.state.external_scorer = external_scorer

    @app.post("/images", response_model=schemas.UploadResponse,
              status_code=201)
    async def upload(request: Request):
        body = await request.body()
        if len(body) > cfg.service.max_upload_bytes:
            raise HTTPException(413, "image exceeds %d bytes"
                                % cfg.service.max_upload_bytes)
        try:
            img = dataio.decode_png(body)
        except (dataio.UnsupportedFormatError, dataio.CorruptFileError,
                ValueError) as exc:
            raise HTTPException(400, "not a decodable RGB PNG: %s" % exc)
        image_id = app.state.sessions.add(img)
        return schemas.UploadResponse(id=image_id, width=img.width,
                                      height=img.height)

    @app.get("/model/info", response_model=schemas.ModelInfo)
    def model_info():
        snap = app.state.snapshot
        return schemas.ModelInfo(
            filters=list(snap.filter_names),
            j=len(snap.filter_names),
            lut_n=snap.lut_n,
            checkpoint_version=snap.checkpoint_version,
            has_predictor=snap.predictor is not None,
        )

    @app.get("/images/{image_id}/predict",
             response_model=schemas.PredictResponse)
    def predict_params(image_id: str):
        snap = app.state.snapshot
        session = app.state.sessions.get(image_id)
        if snap.predictor is None:
            raise HTTPException(400, "loaded checkpoint has no predictor")
        w = predict(snap.predictor, session.image)
        return schemas.PredictResponse(w=w.as_dict())

    @app.post("/images/{image_id}/enhance")
    def enhance(image_id: str, body: schemas.EnhanceRequest):
        snap = app.state.snapshot
        session = app.state.sessions.get(image_id)
        w = _parse_w(body.w, snap.filter_names)
        width = body.preview_width or cfg.service.preview_max_width
        width = min(width, cfg.service.preview_max_width)
        preview = session.preview(width)
        return _png_response(_apply(snap, preview, w), "preview.png")

    @app.get("/images/{image_id}/scores",
             response_model=schemas.ScoresResponse)
    def scores(image_id: str, w: str = ""):
        snap = app.state.snapshot
        session = app.state.sessions.get(image_id)
        params = (_parse_w_query(w, snap.filter_names) if w
                  else FilterParams.zeros(snap.filter_names))
        preview = _apply(snap, session.preview(cfg.service.preview_max_width),
                         params)
        scorer = app.state.external_scorer
        if scorer is not None:
            prompts = cfg.prompts if len(cfg.prompts) == len(
                snap.filter_names) else DEFAULT_PROMPTS
            try:
                result = scorer.score(preview, prompts)
                return schemas.ScoresResponse(
                    scores=dict(zip(result.names, result.values)),
                    used_external=True, analytic_fallback=False)
            except ExternalScorerError as exc:
                warnings.warn("external scorer failed: %s" % exc)
                fallback = score_analytic(preview, snap.filter_names)
                return Response(
                    content=schemas.ScoresResponse(
                        scores=dict(zip(fallback.names, fallback.values)),
                        used_external=False, analytic_fallback=True,
                    ).model_dump_json(),
                    status_code=502, media_type="application/json")
        result = score_analytic(preview, snap.filter_names)
        return schemas.ScoresResponse(
            scores=dict(zip(result.names, result.values)),
            used_external=False, analytic_fallback=False)

    @app.post("/images/{image_id}/export")
    def export(image_id: str, body: schemas.WRequest):
        snap = app.state.snapshot
        session = app.state.sessions.get(image_id)
        w = _parse_w(body.w, snap.filter_names)
        return _png_response(_apply(snap, session.image, w), "enhanced.png")

    @app.post("/images/{image_id}/lut")
    def export_lut(image_id: str, body: schemas.WRequest):
        snap = app.state.snapshot
        app.state.sessions.get(image_id)  # 404 before doing any work
        w = _parse_w(body.w, snap.filter_names)
        if np.any(w.values):
            cube = lut.write_cube(lut.bypass(snap.model, w, n=snap.lut_n),
                                  title="implut")
        else:
            cube = lut.write_cube(lut.Lut3d.identity(snap.lut_n),
                                  title="implut identity")
        return Response(
            content=cube, media_type="application/octet-stream",
            headers={"Content-Disposition":
                     'attachment; filename="enhanced.cube"'})

    return app
