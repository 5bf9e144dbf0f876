// DVF panel rendering. All three arms share one reference DVF, so the
// geometry (axis ranges, ticks, marker positions) is computed once from
// the DVF alone and reused for every panel; only the filled/hollow state
// of the markers differs between arms. Identical axes are what make the
// side-by-side comparison fair.

import { activeFlags } from './payload.js'
import type { ArmLabel, DvfPoints, SetPayload } from './types.js'

export interface AxisSpec {
  min: number
  max: number
  ticks: number[]
}

export interface FreqTick {
  doi: number
  label: string
}

export interface PanelGeometry {
  x: AxisSpec // DOI, degrees
  y: AxisSpec // DtoM, mm
  freqTicks: FreqTick[]
}

// Round tick spacing down the 1/2/5 ladder aiming for about `count` ticks.
export function niceTicks(min: number, max: number, count = 5): number[] {
  const span = max - min
  if (!(span > 0)) return [min]
  const rawStep = span / count
  const power = Math.pow(10, Math.floor(Math.log10(rawStep)))
  const residual = rawStep / power
  const step = (residual > 5 ? 10 : residual > 2 ? 5 : residual > 1 ? 2 : 1) * power
  const ticks: number[] = []
  for (let t = Math.ceil(min / step) * step; t <= max + step * 1e-9; t += step) {
    ticks.push(Math.round(t / step) * step)
  }
  return ticks
}

// Audiological octave ladder; only the part inside the payload's range is used.
const FREQ_LADDER = [16000, 8000, 4000, 2000, 1000, 500, 250, 125]

// Place frequency decreases with insertion depth, so the frequency axis runs
// along the DOI axis. Tick positions come from interpolating DOI against
// log-frequency between neighbouring contacts.
export function frequencyTicks(dvf: DvfPoints): FreqTick[] {
  const logf = dvf.frequency_hz.map(Math.log)
  const doi = dvf.doi_deg
  const fMin = Math.min(...dvf.frequency_hz)
  const fMax = Math.max(...dvf.frequency_hz)
  const ticks: FreqTick[] = []
  for (const f of FREQ_LADDER) {
    if (f < fMin || f > fMax) continue
    const target = Math.log(f)
    for (let i = 0; i + 1 < logf.length; i++) {
      const [a, b] = [logf[i], logf[i + 1]]
      if ((target - a) * (target - b) <= 0 && a !== b) {
        const s = (target - a) / (b - a)
        ticks.push({ doi: doi[i] + s * (doi[i + 1] - doi[i]), label: formatHz(f) })
        break
      }
    }
  }
  return ticks
}

function formatHz(f: number): string {
  return f >= 1000 ? `${f / 1000}k` : `${f}`
}

export function axesFor(dvf: DvfPoints): PanelGeometry {
  const xLo = Math.min(...dvf.doi_deg)
  const xHi = Math.max(...dvf.doi_deg)
  const xPad = 0.04 * (xHi - xLo || 1)
  const x = { min: xLo - xPad, max: xHi + xPad }
  // DtoM is a distance; anchoring the axis at zero keeps the scale honest.
  const yHi = Math.max(...dvf.dtom_mm)
  const y = { min: 0, max: yHi * 1.1 || 1 }
  return {
    x: { ...x, ticks: niceTicks(x.min, x.max) },
    y: { ...y, ticks: niceTicks(y.min, y.max, 4) },
    freqTicks: frequencyTicks(dvf),
  }
}

// Fixed drawing area; panels scale with CSS.
const W = 340
const H = 240
const MARGIN = { left: 44, right: 10, top: 26, bottom: 34 }

function xPixel(geom: PanelGeometry, v: number): number {
  const { min, max } = geom.x
  return MARGIN.left + ((v - min) / (max - min)) * (W - MARGIN.left - MARGIN.right)
}

function yPixel(geom: PanelGeometry, v: number): number {
  const { min, max } = geom.y
  return H - MARGIN.bottom - ((v - min) / (max - min)) * (H - MARGIN.top - MARGIN.bottom)
}

function round2(v: number): number {
  return Math.round(v * 100) / 100
}

// One arm's panel as standalone SVG markup. Active contacts draw as filled
// markers, deactivated ones as hollow rings at the same DVF position.
export function panelSvg(payload: SetPayload, label: ArmLabel, geom: PanelGeometry): string {
  const dvf = payload.dvf
  const flags = activeFlags(payload, label)
  const parts: string[] = []
  parts.push(`<svg viewBox="0 0 ${W} ${H}" class="dvf-panel">`)
  parts.push(`<title>configuration ${label}</title>`)

  const x0 = MARGIN.left
  const x1 = W - MARGIN.right
  const y0 = H - MARGIN.bottom
  const y1 = MARGIN.top
  parts.push(`<line class="axis" x1="${x0}" y1="${y0}" x2="${x1}" y2="${y0}"/>`)
  parts.push(`<line class="axis" x1="${x0}" y1="${y0}" x2="${x0}" y2="${y1}"/>`)
  parts.push(`<line class="axis" x1="${x0}" y1="${y1}" x2="${x1}" y2="${y1}"/>`)

  for (const t of geom.x.ticks) {
    const px = round2(xPixel(geom, t))
    parts.push(`<line class="tick" x1="${px}" y1="${y0}" x2="${px}" y2="${y0 + 4}"/>`)
    parts.push(`<text class="tick-label" x="${px}" y="${y0 + 15}" text-anchor="middle">${t}</text>`)
  }
  for (const t of geom.y.ticks) {
    const py = round2(yPixel(geom, t))
    parts.push(`<line class="tick" x1="${x0 - 4}" y1="${py}" x2="${x0}" y2="${py}"/>`)
    parts.push(
      `<text class="tick-label" x="${x0 - 7}" y="${py + 3}" text-anchor="end">${round2(t)}</text>`,
    )
  }
  for (const t of geom.freqTicks) {
    const px = round2(xPixel(geom, t.doi))
    parts.push(`<line class="tick" x1="${px}" y1="${y1 - 4}" x2="${px}" y2="${y1}"/>`)
    parts.push(
      `<text class="tick-label" x="${px}" y="${y1 - 7}" text-anchor="middle">${t.label}</text>`,
    )
  }
  parts.push(
    `<text class="axis-title" x="${(x0 + x1) / 2}" y="${H - 6}" text-anchor="middle">DOI (deg)</text>`,
  )
  parts.push(
    `<text class="axis-title" x="12" y="${(y0 + y1) / 2}" text-anchor="middle" ` +
      `transform="rotate(-90 12 ${(y0 + y1) / 2})">DtoM (mm)</text>`,
  )
  parts.push(
    `<text class="axis-title freq" x="${x1}" y="${y1 - 7}" text-anchor="end">Hz</text>`,
  )

  const px = dvf.doi_deg.map((v) => round2(xPixel(geom, v)))
  const py = dvf.dtom_mm.map((v) => round2(yPixel(geom, v)))
  const path = px.map((x, i) => `${x},${py[i]}`).join(' ')
  parts.push(`<polyline class="dvf-line" points="${path}"/>`)
  for (let i = 0; i < payload.n_contacts; i++) {
    const cls = flags[i] ? 'contact active' : 'contact deactivated'
    parts.push(`<circle class="${cls}" cx="${px[i]}" cy="${py[i]}" r="4" data-contact="${i}"/>`)
  }
  parts.push('</svg>')
  return parts.join('')
}
