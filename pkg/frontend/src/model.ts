// Rating state for the set on screen, kept free of DOM concerns so the
// invariants are testable: submit only unlocks once every arm has a rank
// and an acceptability verdict, and ranks are each from {1, 2, 3} with
// ties allowed (two arms may share a rank).

import {
  ARM_LABELS,
  type ArmLabel,
  type Rank,
  type Submission,
} from './types.js'

export interface RatingState {
  ranks: Partial<Record<ArmLabel, Rank>>
  acceptable: Partial<Record<ArmLabel, boolean>>
  focus: ArmLabel
}

export function freshState(): RatingState {
  return { ranks: {}, acceptable: {}, focus: 'A' }
}

export function setRank(state: RatingState, label: ArmLabel, rank: Rank): RatingState {
  return { ...state, ranks: { ...state.ranks, [label]: rank } }
}

// First press marks the arm acceptable; later presses flip the verdict.
export function toggleAcceptable(state: RatingState, label: ArmLabel): RatingState {
  const current = state.acceptable[label]
  const next = current === undefined ? true : !current
  return { ...state, acceptable: { ...state.acceptable, [label]: next } }
}

export function setFocus(state: RatingState, label: ArmLabel): RatingState {
  return { ...state, focus: label }
}

export function nextFocus(label: ArmLabel): ArmLabel {
  const i = ARM_LABELS.indexOf(label)
  return ARM_LABELS[(i + 1) % ARM_LABELS.length]
}

export function prevFocus(label: ArmLabel): ArmLabel {
  const i = ARM_LABELS.indexOf(label)
  return ARM_LABELS[(i + ARM_LABELS.length - 1) % ARM_LABELS.length]
}

export function ranksComplete(state: RatingState): boolean {
  return ARM_LABELS.every((label) => {
    const r = state.ranks[label]
    return r === 1 || r === 2 || r === 3
  })
}

export function flagsComplete(state: RatingState): boolean {
  return ARM_LABELS.every((label) => typeof state.acceptable[label] === 'boolean')
}

export function canSubmit(state: RatingState): boolean {
  return ranksComplete(state) && flagsComplete(state)
}

export function buildSubmission(setId: string, state: RatingState): Submission | null {
  if (!canSubmit(state)) return null
  return {
    set_id: setId,
    ranks: { ...(state.ranks as Record<ArmLabel, Rank>) },
    acceptable: { ...(state.acceptable as Record<ArmLabel, boolean>) },
  }
}

// --- keyboard ---------------------------------------------------------------
//
// 1/2/3 rank the focused arm, a toggles its acceptability; both advance the
// focus so the fast path for a set is "1 2 3 a a a Enter". Arrows and Tab
// move the focus for corrections; Enter submits once everything is set.

export interface KeyOutcome {
  state: RatingState
  submit: boolean
}

export function applyKey(state: RatingState, key: string): KeyOutcome {
  switch (key) {
    case '1':
    case '2':
    case '3': {
      const ranked = setRank(state, state.focus, Number(key) as Rank)
      return { state: setFocus(ranked, nextFocus(state.focus)), submit: false }
    }
    case 'a':
    case 'A': {
      const flagged = toggleAcceptable(state, state.focus)
      return { state: setFocus(flagged, nextFocus(state.focus)), submit: false }
    }
    case 'ArrowRight':
    case 'Tab':
      return { state: setFocus(state, nextFocus(state.focus)), submit: false }
    case 'ArrowLeft':
      return { state: setFocus(state, prevFocus(state.focus)), submit: false }
    case 'Enter':
      return { state, submit: canSubmit(state) }
    default:
      return { state, submit: false }
  }
}
