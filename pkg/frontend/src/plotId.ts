// Client-side mirror of the server's plot ID validation: 5 to 7
// colon-joined non-negative integers, nothing else.
const PLOT_ID = /^\d+(?::\d+){4,6}$/;

export function isValidPlotId(input: string): boolean {
  return PLOT_ID.test(input);
}
