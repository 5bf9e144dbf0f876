// Validation of the blinded set payload before anything is rendered.
//
// The server is trusted but the payload still gets checked field by field:
// a malformed set must produce an error banner, never a half-drawn panel or
// a submit button. Validation also doubles as the blinding tripwire: the
// wire format must not leak which arm is which.

import { ARM_LABELS, type ArmLabel, type SetPayload } from './types.js'

const DVF_KEYS = ['doi_deg', 'dtom_mm', 'dtobm_mm', 'frequency_hz'] as const

// Words that would identify an arm. The hidden identities never appear in
// a well-formed payload; seeing one of these means the blind is broken.
const ROLE_HINTS = /\b(automatic|reference|control|ground_truth|roles?)\b/gi

export type PayloadCheck =
  | { ok: true; payload: SetPayload }
  | { ok: false; problems: string[] }

function isFiniteNumberArray(value: unknown, length: number): value is number[] {
  return (
    Array.isArray(value) &&
    value.length === length &&
    value.every((v) => typeof v === 'number' && Number.isFinite(v))
  )
}

export function validatePayload(raw: unknown): PayloadCheck {
  const problems: string[] = []
  if (typeof raw !== 'object' || raw === null || Array.isArray(raw)) {
    return { ok: false, problems: ['payload is not an object'] }
  }
  const obj = raw as Record<string, unknown>

  if (typeof obj.set_id !== 'string' || obj.set_id.length === 0) {
    problems.push('set_id missing or empty')
  }
  const n = obj.n_contacts
  if (typeof n !== 'number' || !Number.isInteger(n) || n < 1) {
    problems.push('n_contacts is not a positive integer')
    return { ok: false, problems }
  }

  const dvf = obj.dvf as Record<string, unknown> | undefined
  if (typeof dvf !== 'object' || dvf === null) {
    problems.push('dvf missing')
  } else {
    for (const key of DVF_KEYS) {
      if (!isFiniteNumberArray(dvf[key], n)) {
        problems.push(`dvf.${key} is not ${n} finite numbers`)
      }
    }
  }

  const configs = obj.configurations as Record<string, unknown> | undefined
  if (typeof configs !== 'object' || configs === null) {
    problems.push('configurations missing')
  } else {
    const labels = Object.keys(configs).sort()
    if (labels.join(',') !== ARM_LABELS.join(',')) {
      problems.push(`configurations must be keyed by ${ARM_LABELS.join('/')}`)
    } else {
      for (const label of ARM_LABELS) {
        const active = (configs[label] as Record<string, unknown>)?.active
        const flags = Array.isArray(active) ? active : null
        if (
          flags === null ||
          flags.length !== n ||
          !flags.every((v) => v === 0 || v === 1)
        ) {
          problems.push(`configurations.${label}.active is not ${n} 0/1 flags`)
        } else if (!flags.some((v) => v === 1)) {
          problems.push(`configurations.${label} has no active contact`)
        }
      }
    }
  }

  const hints = findRoleHints(raw)
  if (hints.length > 0) {
    problems.push(`payload leaks arm identity: ${hints.join(', ')}`)
  }

  if (problems.length > 0) return { ok: false, problems }
  return { ok: true, payload: obj as unknown as SetPayload }
}

// Scan the serialized payload for role words; returns the distinct matches.
export function findRoleHints(raw: unknown): string[] {
  const text = JSON.stringify(raw) ?? ''
  const seen = new Set<string>()
  for (const match of text.matchAll(ROLE_HINTS)) {
    seen.add(match[0].toLowerCase())
  }
  return [...seen].sort()
}

export function activeFlags(payload: SetPayload, label: ArmLabel): boolean[] {
  return payload.configurations[label].active.map((v) => v === 1)
}
