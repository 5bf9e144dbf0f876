// Single-page rating client. The server is the source of truth for
// progress: every screen starts from GET /next, so a refresh or restart
// resumes at the first unanswered set. One submission is in flight at a
// time and the keyboard drives the whole loop (1/2/3 rank, a toggles
// acceptable, arrows move focus, Enter submits).

import { RatingApi } from './api.js'
import { axesFor, panelSvg, type PanelGeometry } from './chart.js'
import {
  applyKey,
  buildSubmission,
  canSubmit,
  freshState,
  setFocus,
  setRank,
  toggleAcceptable,
  type RatingState,
} from './model.js'
import { validatePayload } from './payload.js'
import {
  ARM_LABELS,
  type ArmLabel,
  type Progress,
  type Rank,
  type SetPayload,
  type Submission,
} from './types.js'

let api: RatingApi
let payload: SetPayload | null = null
let geom: PanelGeometry | null = null
let state: RatingState = freshState()
let inFlight = false
let finished = false
let pendingRetry: Submission | null = null

function el(id: string): HTMLElement {
  const found = document.getElementById(id)
  if (!found) throw new Error(`missing element #${id}`)
  return found
}

function showBanner(message: string, retry: boolean): void {
  const banner = el('banner')
  banner.classList.remove('hidden')
  banner.innerHTML = retry
    ? `<span>${message}</span> <button id="retry">retry</button>`
    : `<span>${message}</span>`
  if (retry) {
    document.getElementById('retry')?.addEventListener('click', () => {
      void submitCurrent()
    })
  }
}

function clearBanner(): void {
  const banner = el('banner')
  banner.classList.add('hidden')
  banner.innerHTML = ''
}

function showNotice(message: string): void {
  const notice = el('notice')
  notice.textContent = message
  notice.classList.remove('hidden')
  window.setTimeout(() => notice.classList.add('hidden'), 2500)
}

function renderProgress(progress: Progress): void {
  el('progress').textContent = `${progress.completed} / ${progress.total} rated`
}

function panelCard(label: ArmLabel): string {
  if (!payload || !geom) return ''
  return `
    <section class="panel" data-label="${label}" tabindex="-1">
      <header>
        <span class="arm">${label}</span>
        <span class="rank-badge" data-role-rank="${label}"></span>
        <span class="accept-badge" data-role-accept="${label}"></span>
      </header>
      ${panelSvg(payload, label, geom)}
      <div class="controls">
        <span class="hint">rank</span>
        ${[1, 2, 3]
          .map((r) => `<button class="rank" data-label="${label}" data-rank="${r}">${r}</button>`)
          .join('')}
        <button class="accept" data-label="${label}">acceptable</button>
      </div>
    </section>`
}

function renderSet(progress: Progress): void {
  renderProgress(progress)
  const main = el('main')
  main.innerHTML = `
    <div class="panels">${ARM_LABELS.map(panelCard).join('')}</div>
    <div class="submit-row">
      <button id="submit" disabled>submit rating</button>
      <span class="hint">1/2/3 rank &middot; a acceptable &middot; &larr;&rarr; focus &middot; Enter submit</span>
    </div>`

  for (const section of main.querySelectorAll<HTMLElement>('.panel')) {
    section.addEventListener('click', () => {
      state = setFocus(state, section.dataset.label as ArmLabel)
      updateControls()
    })
  }
  for (const button of main.querySelectorAll<HTMLButtonElement>('button.rank')) {
    button.addEventListener('click', (event) => {
      event.stopPropagation()
      const label = button.dataset.label as ArmLabel
      state = setFocus(setRank(state, label, Number(button.dataset.rank) as Rank), label)
      updateControls()
    })
  }
  for (const button of main.querySelectorAll<HTMLButtonElement>('button.accept')) {
    button.addEventListener('click', (event) => {
      event.stopPropagation()
      const label = button.dataset.label as ArmLabel
      state = setFocus(toggleAcceptable(state, label), label)
      updateControls()
    })
  }
  el('submit').addEventListener('click', () => {
    void submitCurrent()
  })
  updateControls()
}

function updateControls(): void {
  const main = el('main')
  for (const label of ARM_LABELS) {
    const section = main.querySelector<HTMLElement>(`.panel[data-label="${label}"]`)
    if (!section) continue
    section.classList.toggle('focused', state.focus === label)
    const rank = state.ranks[label]
    const rankBadge = section.querySelector<HTMLElement>(`[data-role-rank="${label}"]`)
    if (rankBadge) rankBadge.textContent = rank ? `rank ${rank}` : 'unranked'
    const verdict = state.acceptable[label]
    const acceptBadge = section.querySelector<HTMLElement>(`[data-role-accept="${label}"]`)
    if (acceptBadge) {
      acceptBadge.textContent =
        verdict === undefined ? '' : verdict ? 'acceptable' : 'not acceptable'
      acceptBadge.classList.toggle('no', verdict === false)
    }
    for (const button of section.querySelectorAll<HTMLButtonElement>('button.rank')) {
      button.classList.toggle('selected', Number(button.dataset.rank) === rank)
    }
    const acceptButton = section.querySelector<HTMLButtonElement>('button.accept')
    if (acceptButton) {
      acceptButton.classList.toggle('selected', verdict === true)
      acceptButton.classList.toggle('negated', verdict === false)
    }
  }
  const submit = document.getElementById('submit') as HTMLButtonElement | null
  if (submit) submit.disabled = !canSubmit(state) || inFlight
}

function renderDone(summary: unknown, progress: Progress): void {
  renderProgress(progress)
  finished = true
  payload = null
  el('main').innerHTML = `
    <div class="done">
      <h2>session complete</h2>
      <pre>${JSON.stringify(summary, null, 2)}</pre>
    </div>`
}

async function loadNext(): Promise<void> {
  clearBanner()
  pendingRetry = null
  let next
  try {
    next = await api.next()
  } catch (err) {
    showBanner(`could not reach the rating service: ${String(err)}`, false)
    return
  }
  if (next.done || next.set === null) {
    const summary = await api.summary().catch(() => ({}))
    renderDone(summary, next.progress)
    return
  }
  const check = validatePayload(next.set)
  if (!check.ok) {
    showBanner(`malformed set payload: ${check.problems.join('; ')}`, false)
    el('main').innerHTML = ''
    payload = null
    return
  }
  payload = check.payload
  geom = axesFor(payload.dvf)
  state = freshState()
  renderSet(next.progress)
}

async function submitCurrent(): Promise<void> {
  if (!payload || inFlight) return
  const submission = pendingRetry ?? buildSubmission(payload.set_id, state)
  if (!submission) return
  inFlight = true
  updateControls()
  clearBanner()
  const outcome = await api.submit(submission)
  inFlight = false
  switch (outcome.kind) {
    case 'ok':
      pendingRetry = null
      await loadNext()
      break
    case 'duplicate':
      pendingRetry = null
      showNotice('this set was already rated in this session; moving on')
      await loadNext()
      break
    case 'rejected':
      updateControls()
      showBanner(`submission rejected: ${outcome.detail}`, false)
      break
    case 'network':
      // keep the payload for an identical retry
      pendingRetry = submission
      updateControls()
      showBanner(`could not submit (${outcome.detail})`, true)
      break
  }
}

function onKey(event: KeyboardEvent): void {
  if (finished || inFlight || !payload) return
  const handled = ['1', '2', '3', 'a', 'A', 'ArrowLeft', 'ArrowRight', 'Tab', 'Enter']
  if (!handled.includes(event.key)) return
  event.preventDefault()
  const outcome = applyKey(state, event.key)
  state = outcome.state
  updateControls()
  if (outcome.submit) void submitCurrent()
}

function init(): void {
  const params = new URLSearchParams(window.location.search)
  const session = params.get('session') || 'rater'
  const base = params.get('api') || ''
  api = new RatingApi(base, session)
  el('session').textContent = `session: ${session}`
  document.addEventListener('keydown', onKey)
  void loadNext()
}

document.addEventListener('DOMContentLoaded', init)
