// Wire types for the rating API. Field names follow the server's JSON.

export type ArmLabel = 'A' | 'B' | 'C'
export const ARM_LABELS: readonly ArmLabel[] = ['A', 'B', 'C']

export type Rank = 1 | 2 | 3

export interface DvfPoints {
  doi_deg: number[]
  dtom_mm: number[]
  dtobm_mm: number[]
  frequency_hz: number[]
}

export interface ArmConfiguration {
  active: number[] // 0/1 per contact
}

export interface SetPayload {
  set_id: string
  n_contacts: number
  dvf: DvfPoints
  configurations: Record<ArmLabel, ArmConfiguration>
}

export interface Progress {
  completed: number
  total: number
}

export interface NextResponse {
  done: boolean
  progress: Progress
  set: SetPayload | null
}

export interface Submission {
  set_id: string
  ranks: Record<ArmLabel, Rank>
  acceptable: Record<ArmLabel, boolean>
}

// Outcome of one POST, folded into something the app can switch on.
export type SubmitResult =
  | { kind: 'ok'; progress: Progress }
  | { kind: 'duplicate'; detail: string }
  | { kind: 'rejected'; detail: string } // 404 / 422; submission will not be retried
  | { kind: 'network'; detail: string } // transport failure; retry with the same payload
