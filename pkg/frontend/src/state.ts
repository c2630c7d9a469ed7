/** Session-view state and pure transitions: token selection, word spans,
 * what-if removal set, and URL round-tripping for shareable views. */

export interface SelectionState {
  selected: ReadonlySet<number>;
  removed: ReadonlySet<number>;
}

export const emptySelection: SelectionState = {
  selected: new Set(),
  removed: new Set(),
};

export function toggleToken(state: SelectionState, position: number): SelectionState {
  const selected = new Set(state.selected);
  if (selected.has(position)) {
    selected.delete(position);
  } else {
    selected.add(position);
  }
  return { ...state, selected };
}

/** Select every token whose character span overlaps [start, end) (word drag). */
export function selectSpan(
  state: SelectionState,
  offsets: [number, number][],
  start: number,
  end: number,
): SelectionState {
  const selected = new Set(state.selected);
  offsets.forEach(([tokStart, tokEnd], position) => {
    if (tokStart < end && tokEnd > start) selected.add(position);
  });
  return { ...state, selected };
}

export function toggleRegion(state: SelectionState, region: number): SelectionState {
  const removed = new Set(state.removed);
  if (removed.has(region)) {
    removed.delete(region);
  } else {
    removed.add(region);
  }
  return { ...state, removed };
}

export function clearSelection(state: SelectionState): SelectionState {
  return { ...state, selected: new Set() };
}

function encodeSet(values: ReadonlySet<number>): string {
  return [...values].sort((a, b) => a - b).join(",");
}

function decodeSet(text: string | null): Set<number> {
  if (!text) return new Set();
  return new Set(
    text
      .split(",")
      .map((part) => Number.parseInt(part, 10))
      .filter((v) => Number.isInteger(v) && v >= 0),
  );
}

/** Serialize selection state into URL hash parameters (shareable view). */
export function stateToHash(sessionId: string, state: SelectionState): string {
  const params = new URLSearchParams();
  params.set("s", sessionId);
  if (state.selected.size) params.set("t", encodeSet(state.selected));
  if (state.removed.size) params.set("r", encodeSet(state.removed));
  return "#" + params.toString();
}

export function stateFromHash(hash: string): {
  sessionId: string | null;
  state: SelectionState;
} {
  const params = new URLSearchParams(hash.replace(/^#/, ""));
  return {
    sessionId: params.get("s"),
    state: {
      selected: decodeSet(params.get("t")),
      removed: decodeSet(params.get("r")),
    },
  };
}
