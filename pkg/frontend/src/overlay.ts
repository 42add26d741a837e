/**
 * Client-side box overlay: map 1000-grid boxes onto the displayed
 * image's CSS pixel space.  The same scale arithmetic the backend uses
 * for denormalization, so rectangles line up with the server-rendered
 * overlay variant to within a pixel at any render size.
 */

export const GRID = 1000;

export interface Rect {
  left: number;
  top: number;
  width: number;
  height: number;
}

export interface DisplaySize {
  width: number;
  height: number;
}

/** One CSS rectangle per box, in the displayed image's coordinates. */
export function computeRects(
  boxes: readonly [number, number, number, number][],
  displayed: DisplaySize,
): Rect[] {
  if (displayed.width <= 0 || displayed.height <= 0) {
    throw new Error("displayed size must be positive");
  }
  return boxes.map(([x0, y0, x1, y1]) => {
    if (x1 < x0 || y1 < y0) {
      throw new Error(`invalid box [${x0}, ${y0}, ${x1}, ${y1}]`);
    }
    const left = (x0 * displayed.width) / GRID;
    const top = (y0 * displayed.height) / GRID;
    return {
      left,
      top,
      width: (x1 * displayed.width) / GRID - left,
      height: (y1 * displayed.height) / GRID - top,
    };
  });
}

/** CSS style text for one overlay rectangle. */
export function rectStyle(rect: Rect): string {
  return (
    `left:${rect.left.toFixed(2)}px;top:${rect.top.toFixed(2)}px;` +
    `width:${rect.width.toFixed(2)}px;height:${rect.height.toFixed(2)}px`
  );
}
