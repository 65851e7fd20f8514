/**
 * Typed client for the review service.
 *
 * Every response is validated with zod before it reaches application state,
 * so the UI can never render numbers the server did not send.
 */

import { z } from "zod";

export const SessionViewSchema = z.object({
  label: z.string(),
  status: z.string(),
  round_index: z.number().int(),
  max_rounds: z.number().int(),
  threshold: z.number(),
  batch_id: z.string().nullable(),
  accepted_total: z.number().int(),
});
export type SessionView = z.infer<typeof SessionViewSchema>;

export const ReviewItemSchema = z.object({
  item_id: z.string(),
  batch_id: z.string(),
  label: z.string(),
  generated_text: z.string(),
  definition_text: z.string(),
  few_shot_snippets: z.array(z.string()),
  status: z.enum(["pending", "verdicted"]),
});
export type ReviewItem = z.infer<typeof ReviewItemSchema>;

export const ProgressSchema = z.object({
  batch_id: z.string(),
  verdicted: z.number().int(),
  total: z.number().int(),
  accuracy: z.number().nullable(),
  threshold: z.number(),
  round_index: z.number().int(),
  max_rounds: z.number().int(),
  status: z.string(),
});
export type Progress = z.infer<typeof ProgressSchema>;

export const VerdictResultSchema = z.object({
  item_id: z.string(),
  batch_id: z.string(),
  status: z.string(),
  passed: z.boolean(),
});
export type VerdictResult = z.infer<typeof VerdictResultSchema>;

export const AdvanceResultSchema = z.object({
  status: z.enum(["accepted", "next_round", "threshold_not_reached"]),
  accuracy: z.number(),
  round_index: z.number().int(),
  accepted_total: z.number().int(),
  batch_id: z.string().optional(),
});
export type AdvanceResult = z.infer<typeof AdvanceResultSchema>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly errorType: string,
    message: string,
  ) {
    super(message);
  }
}

async function parseResponse<T>(
  response: Response,
  schema: z.ZodType<T>,
): Promise<T> {
  const body = await response.json().catch(() => null);
  if (!response.ok) {
    const detail = (body as { detail?: { error?: string; message?: string } })
      ?.detail;
    throw new ApiError(
      response.status,
      detail?.error ?? "HttpError",
      detail?.message ?? `HTTP ${response.status}`,
    );
  }
  return schema.parse(body);
}

export class ReviewApi {
  constructor(private readonly baseUrl: string) {}

  private url(path: string): string {
    return `${this.baseUrl.replace(/\/$/, "")}${path}`;
  }

  async session(): Promise<SessionView> {
    return parseResponse(await fetch(this.url("/session")), SessionViewSchema);
  }

  async listPending(batchId: string): Promise<ReviewItem[]> {
    return parseResponse(
      await fetch(this.url(`/batches/${batchId}/items`)),
      z.array(ReviewItemSchema),
    );
  }

  async progress(batchId: string): Promise<Progress> {
    return parseResponse(
      await fetch(this.url(`/batches/${batchId}/progress`)),
      ProgressSchema,
    );
  }

  async submitVerdict(
    itemId: string,
    passed: boolean,
    feedback?: string,
    idempotencyKey?: string,
  ): Promise<VerdictResult> {
    const response = await fetch(this.url(`/items/${itemId}/verdict`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({
        passed,
        feedback: feedback ?? null,
        idempotency_key: idempotencyKey ?? null,
      }),
    });
    return parseResponse(response, VerdictResultSchema);
  }

  async advance(batchId: string): Promise<AdvanceResult> {
    const response = await fetch(this.url(`/batches/${batchId}/advance`), {
      method: "POST",
    });
    return parseResponse(response, AdvanceResultSchema);
  }
}
