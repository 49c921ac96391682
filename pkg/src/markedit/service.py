"""HTTP JSON service for interactive editing.

Stateless apart from the models loaded at startup: identical requests get
identical responses. Request bodies are validated by hand so the error
contract stays exact: 400 with a field name for malformed input, 422 for a
marker-length mismatch, 200 with flagged=true when constrained decoding had
to fall back. Every response is re-checked against the ban set by code
independent of the decoder before it leaves the service.
"""

from __future__ import annotations

import json
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .decoding import DecodeRequest, ban_set_from_words, decode_request
from .model import EditorModel
from .paraphrase import MarkerModel, ParaphraseResult, auto_mark, boldness, paraphrase
from .textpipe import TextPipeline, tokenize_words


class SafetyViolation(RuntimeError):
    """A decoded output contained a banned word type."""


def introduced_indices(guess_words: list[str], output_words: list[str]) -> list[int]:
    """Positions of output words whose type never occurs in the guess."""
    guess_types = set(guess_words)
    return [i for i, w in enumerate(output_words) if w not in guess_types]


def _error(status: int, message: str, field: str | None = None) -> JSONResponse:
    body: dict = {"error": message}
    if field is not None:
        body["field"] = field
    return JSONResponse(status_code=status, content=body)


async def _json_body(request: Request) -> dict | JSONResponse:
    try:
        body = await request.json()
    except json.JSONDecodeError:
        return _error(400, "request body is not valid JSON")
    if not isinstance(body, dict):
        return _error(400, "request body must be a JSON object")
    return body


def create_app(models: dict[str, EditorModel], pipe: TextPipeline,
               marker_model: MarkerModel | None = None,
               default_beam: int = 5, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="markedit")
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])

    mono_id = next((mid for mid, m in models.items()
                    if m.config.mode == "monolingual"), None)

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/models")
    def list_models():
        return {
            "models": [{"id": mid, "mode": m.config.mode}
                       for mid, m in sorted(models.items())],
            "marker_model": marker_model is not None,
        }

    def pick_model(body: dict) -> EditorModel | JSONResponse:
        model_id = body.get("model")
        if model_id is None:
            if len(models) == 1:
                return next(iter(models.values()))
            return _error(400, f"model id required, loaded: {sorted(models)}", "model")
        if not isinstance(model_id, str) or model_id not in models:
            return _error(400, f"unknown model {model_id!r}, loaded: {sorted(models)}",
                          "model")
        return models[model_id]

    def parse_beam(body: dict) -> int | JSONResponse:
        beam = body.get("beam", default_beam)
        if not isinstance(beam, int) or isinstance(beam, bool) or beam < 1:
            return _error(400, "beam must be a positive integer", "beam")
        return beam

    @app.post("/edit")
    async def edit(request: Request):
        body = await _json_body(request)
        if isinstance(body, JSONResponse):
            return body
        guess = body.get("guess")
        if not isinstance(guess, str) or not guess.strip():
            return _error(400, "guess must be a non-empty string", "guess")
        markers = body.get("markers")
        if (not isinstance(markers, list)
                or any(m not in (0, 1) for m in markers)):
            return _error(400, "markers must be a list of 0/1", "markers")
        guess_words = tokenize_words(guess)
        if len(markers) != len(guess_words):
            return _error(422, f"{len(markers)} markers for {len(guess_words)} "
                               "guess words", "markers")
        model = pick_model(body)
        if isinstance(model, JSONResponse):
            return model
        beam = parse_beam(body)
        if isinstance(beam, JSONResponse):
            return beam
        source = body.get("source")
        if model.config.uses_source:
            if not isinstance(source, str) or not source.strip():
                return _error(400, f"{model.config.mode} model requires a source "
                                   "sentence", "source")
        elif source is not None:
            return _error(400, "monolingual model does not accept a source", "source")

        out = decode_request(model, pipe, DecodeRequest(source=source, guess=guess,
                                                        markers=[int(m) for m in markers]),
                             beam_size=beam)
        output_words = tokenize_words(out.text)
        # independent post-decode safety check, not the decoder's own logic
        banned = ban_set_from_words(guess_words, markers)
        violation = banned & set(output_words)
        if violation:
            raise SafetyViolation(f"banned words in output: {sorted(violation)}")
        return {
            "output": out.text,
            "introduced": introduced_indices(guess_words, output_words),
            "flagged": out.flagged,
            "score": None if out.flagged else out.score,
        }

    @app.post("/paraphrase")
    async def paraphrase_endpoint(request: Request):
        body = await _json_body(request)
        if isinstance(body, JSONResponse):
            return body
        sentence = body.get("sentence")
        if not isinstance(sentence, str) or not sentence.strip():
            return _error(400, "sentence must be a non-empty string", "sentence")
        tau = body.get("tau")
        if not isinstance(tau, (int, float)) or isinstance(tau, bool) \
                or not 0.0 <= float(tau) <= 1.0:
            return _error(400, "tau must be a number in [0, 1]", "tau")
        beam = parse_beam(body)
        if isinstance(beam, JSONResponse):
            return beam
        if mono_id is None:
            return _error(400, "no monolingual model loaded")
        if marker_model is None:
            return _error(400, "no marker model loaded")

        result: ParaphraseResult = paraphrase(sentence, models[mono_id], marker_model,
                                              float(tau), pipe, beam=beam)
        words = tokenize_words(sentence)
        marked_types = {w for w, m in zip(words, result.markers) if m}
        violation = marked_types & set(tokenize_words(result.output))
        if violation:
            raise SafetyViolation(f"banned words in output: {sorted(violation)}")
        return {
            "markers": result.markers,
            "output": result.output,
            "boldness": result.boldness,
            "flagged": result.flagged,
        }

    @app.exception_handler(SafetyViolation)
    async def safety_handler(request: Request, exc: SafetyViolation):
        return JSONResponse(status_code=500, content={"error": str(exc)})

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


__all__ = ["create_app", "introduced_indices", "SafetyViolation",
           "auto_mark", "boldness"]
