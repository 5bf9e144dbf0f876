import type { SetPayload } from '../src/types.js'

// Synthetic but structurally faithful payload: decreasing place frequency
// as an exact octave-per-90-degrees map so interpolated tick positions have
// a closed form to check against.
export function makePayload(n = 12): SetPayload {
  const doi = Array.from({ length: n }, (_, i) => 40 + i * 36)
  return {
    set_id: 'b-b_synth-03-m_a2',
    n_contacts: n,
    dvf: {
      doi_deg: doi,
      dtom_mm: doi.map((d) => 1.1 - d / 2000),
      dtobm_mm: doi.map((d) => -0.35 + d / 4000),
      frequency_hz: doi.map((d) => 16000 * Math.pow(2, -d / 90)),
    },
    configurations: {
      A: { active: doi.map((_, i) => (i % 2 === 0 ? 1 : 0)) },
      B: { active: doi.map(() => 1) },
      C: { active: doi.map((_, i) => (i < 3 ? 0 : 1)) },
    },
  }
}
