// Thin client over the three rating endpoints. The fetch implementation is
// injectable so the submit semantics (409 handling, network retry) are
// testable without a server.

import type { NextResponse, Progress, Submission, SubmitResult } from './types.js'

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>

async function detailOf(res: Response): Promise<string> {
  try {
    const body = (await res.json()) as { detail?: unknown }
    if (typeof body.detail === 'string') return body.detail
  } catch {
    // fall through to the status line
  }
  return `HTTP ${res.status}`
}

export class RatingApi {
  private readonly base: string
  private readonly fetchImpl: FetchLike

  constructor(base: string, readonly sessionId: string, fetchImpl?: FetchLike) {
    this.base = base.replace(/\/+$/, '')
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init))
  }

  private url(tail: string): string {
    return `${this.base}/api/session/${encodeURIComponent(this.sessionId)}/${tail}`
  }

  async next(): Promise<NextResponse> {
    const res = await this.fetchImpl(this.url('next'))
    if (!res.ok) throw new Error(`next failed: ${await detailOf(res)}`)
    return (await res.json()) as NextResponse
  }

  // The submission is sent verbatim, so a retry after a transport failure
  // repeats the identical payload and the server's duplicate check makes the
  // operation idempotent per (set, session).
  async submit(submission: Submission): Promise<SubmitResult> {
    let res: Response
    try {
      res = await this.fetchImpl(this.url('response'), {
        method: 'POST',
        headers: { 'Content-Type': 'application/json' },
        body: JSON.stringify(submission),
      })
    } catch (err) {
      return { kind: 'network', detail: err instanceof Error ? err.message : String(err) }
    }
    if (res.ok) {
      const body = (await res.json()) as { progress: Progress }
      return { kind: 'ok', progress: body.progress }
    }
    if (res.status === 409) return { kind: 'duplicate', detail: await detailOf(res) }
    return { kind: 'rejected', detail: await detailOf(res) }
  }

  async summary(): Promise<unknown> {
    const res = await this.fetchImpl(this.url('summary'))
    if (!res.ok) throw new Error(`summary failed: ${await detailOf(res)}`)
    return await res.json()
  }
}
