/** Thin typed client for the editing service. */

import type {
  EditRequestBody,
  EditResponseBody,
  ErrorBody,
  ModelsResponseBody,
  ParaphraseRequestBody,
  ParaphraseResponseBody,
} from "./types.js";

export class ApiError extends Error {
  readonly status: number;
  readonly field?: string;

  constructor(status: number, body: ErrorBody) {
    super(body.error);
    this.status = status;
    this.field = body.field;
  }
}

async function post<T>(url: string, payload: unknown): Promise<T> {
  const response = await fetch(url, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(payload),
  });
  const body = await response.json();
  if (!response.ok) {
    throw new ApiError(response.status, body as ErrorBody);
  }
  return body as T;
}

export class EditingClient {
  constructor(private readonly baseUrl: string = "") {}

  requestEdit(body: EditRequestBody): Promise<EditResponseBody> {
    return post<EditResponseBody>(`${this.baseUrl}/edit`, body);
  }

  requestParaphrase(body: ParaphraseRequestBody): Promise<ParaphraseResponseBody> {
    return post<ParaphraseResponseBody>(`${this.baseUrl}/paraphrase`, body);
  }

  async models(): Promise<ModelsResponseBody> {
    const response = await fetch(`${this.baseUrl}/models`);
    if (!response.ok) {
      throw new ApiError(response.status, (await response.json()) as ErrorBody);
    }
    return (await response.json()) as ModelsResponseBody;
  }

  async healthy(): Promise<boolean> {
    try {
      const response = await fetch(`${this.baseUrl}/health`);
      return response.ok;
    } catch {
      return false;
    }
  }
}
