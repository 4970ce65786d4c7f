// DOM wiring: one event loop, one state value, rerender on every event.

import { api, ApiError } from "./api.js";
import { drawScan } from "./chart.js";
import { offlineBanner } from "./errors.js";
import {
  ConsoleEvent, ConsoleState, controlsEnabled, initialState, reduce,
} from "./state.js";
import type { UnitSnapshot } from "./types.js";
import { Feed, wsUrl } from "./ws.js";

let state: ConsoleState = initialState();

function dispatch(ev: ConsoleEvent): void {
  state = reduce(state, ev);
  render();
}

const $ = <T extends HTMLElement>(id: string): T =>
  document.getElementById(id) as T;

function unitRow(u: UnitSnapshot): string {
  let stateText = u.state ?? "";
  if (u.state === "Fault" && u.fault_code) {
    stateText = `FAULT(${u.fault_code})`;
  }
  const value = u.kind === "motor" ? `${u.position_steps} steps`
    : u.kind === "encoder" ? `${u.counts} counts`
    : u.reading !== undefined ? `${u.reading}` : "—";
  const canClear = u.kind === "motor" && u.state === "Fault";
  return `<tr>
    <td>${u.name}</td><td>${u.kind}</td>
    <td class="${u.state === "Fault" ? "fault" : ""}">${stateText}</td>
    <td>${value}</td>
    <td>${canClear
      ? `<button data-clear="${u.name}">clear fault</button>` : ""}</td>
  </tr>`;
}

function render(): void {
  const conn = $("connection");
  conn.textContent = state.connection;
  conn.className = state.connection;

  const banner = $("banner");
  if (state.connection === "disconnected") {
    banner.textContent = offlineBanner();
    banner.hidden = false;
  } else if (state.banner) {
    banner.textContent = state.banner;
    banner.hidden = false;
  } else {
    banner.hidden = true;
  }

  const snap = state.snapshot;
  if (snap) {
    $("units").innerHTML = snap.units.map(unitRow).join("");
    $("energy-now").textContent = snap.energy_ev === null
      ? "—" : `${snap.energy_ev.toFixed(3)} eV (${snap.mode})`;
    $("fit-state").textContent = !snap.fits_built ? "no fit"
      : snap.fits_stale ? "fit STALE" : "fit ok";
    const moveSel = $<HTMLSelectElement>("move-unit");
    const motors = snap.units.filter((u) => u.kind === "motor");
    if (moveSel.options.length !== motors.length) {
      moveSel.innerHTML = motors
        .map((u) => `<option value="${u.name}">${u.name}</option>`)
        .join("");
    }
  }

  const scan = state.scan;
  $("scan-state").textContent = scan.state === "running"
    ? `running ${scan.current ?? state.points.size}/${scan.total ?? "?"}`
    : scan.state;

  const enabled = controlsEnabled(state);
  $<HTMLButtonElement>("energy-go").disabled = !enabled.energy;
  $<HTMLButtonElement>("fit-build").disabled = !enabled.energy;
  $<HTMLButtonElement>("move-go").disabled = !enabled.move;
  $<HTMLButtonElement>("scan-go").disabled = !enabled.scanStart;
  $<HTMLButtonElement>("scan-abort").disabled = !enabled.scanAbort;

  drawScan($<HTMLCanvasElement>("plot"), state.points.ordered(),
           `scan: ${scan.state} (${state.points.size} points)`);
}

async function run(action: () => Promise<unknown>): Promise<void> {
  dispatch({ kind: "command_sent" });
  try {
    await action();
    dispatch({ kind: "command_ok" });
  } catch (e) {
    const banner = e instanceof ApiError
      ? e.banner : "request failed unexpectedly";
    dispatch({ kind: "command_error", banner });
  }
}

function num(id: string): number {
  return Number($<HTMLInputElement>(id).value);
}

function wire(): void {
  $("energy-go").onclick = () =>
    run(() => api.setEnergy(num("energy-ev"),
                            $<HTMLSelectElement>("energy-mode").value));
  $("fit-build").onclick = () =>
    run(() => api.buildFit(num("fit-lo"), num("fit-hi"), num("fit-n")));
  $("move-go").onclick = () =>
    run(() => api.move($<HTMLSelectElement>("move-unit").value,
                       num("move-steps"),
                       $<HTMLInputElement>("move-rel").checked));
  $("scan-go").onclick = () =>
    run(() => api.startScan({
      e_start: num("scan-start"), e_end: num("scan-end"),
      step: num("scan-step") || undefined,
      dwell_s: num("scan-dwell") || undefined,
      mode: $<HTMLSelectElement>("scan-mode").value,
    }));
  $("scan-abort").onclick = () => run(() => api.abortScan());
  $("units").onclick = (ev) => {
    const unit = (ev.target as HTMLElement).dataset?.clear;
    if (unit) run(() => api.clearFault(unit));
  };
  $("banner").onclick = () => dispatch({ kind: "banner_dismissed" });
}

async function backfillScan(): Promise<void> {
  // After a (re)connect during a scan, fetch everything the server holds;
  // the buffer drops whatever the WS already delivered.
  try {
    const res = await api.scanPoints(0);
    state.points.merge(res.points);
    render();
  } catch {
    // feed will retry; snapshot still renders
  }
}

new Feed(wsUrl(window.location), {
  onOpen: () => {
    dispatch({ kind: "ws_open" });
    void backfillScan();
  },
  onClose: () => dispatch({ kind: "ws_close" }),
  onMessage: (msg) => dispatch({ kind: "ws_message", message: msg }),
});

wire();
render();
