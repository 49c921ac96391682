/** Wire types of the editing service; field names match the server JSON. */

export interface EditRequestBody {
  source?: string;
  guess: string;
  markers: number[];
  beam?: number;
  model?: string;
}

export interface EditResponseBody {
  output: string;
  introduced: number[];
  flagged: boolean;
  score: number | null;
}

export interface ParaphraseRequestBody {
  sentence: string;
  tau: number;
  beam?: number;
}

export interface ParaphraseResponseBody {
  markers: number[];
  output: string;
  boldness: number;
  flagged: boolean;
}

export interface ModelInfo {
  id: string;
  mode: "bilingual" | "monolingual" | "translation";
}

export interface ModelsResponseBody {
  models: ModelInfo[];
  marker_model: boolean;
}

export interface ErrorBody {
  error: string;
  field?: string;
}
