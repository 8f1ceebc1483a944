//! Plain-text SVG figures: imagined layouts, energy histories and trial
//! replays.

use std::fmt::Write as _;

use abstract_map::trace::{MassRecord, SpringRecord, SpringStyle};
use abstract_map::world::{Cell, ScenarioError};
use abstract_map::{Clause, Event, Scenario, Toponym, TraceEvent, Vec2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("trace has no world header")]
    NoHeader,
    #[error("trace header holds an invalid scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("frame {frame} requested but the trace has {available} imagine events")]
    FrameOutOfRange { frame: usize, available: usize },
}

const LAYOUT_WIDTH: f64 = 640.0;
const ENERGY_HEIGHT: f64 = 180.0;
const MARGIN: f64 = 24.0;

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn points(pts: &[(f64, f64)]) -> String {
    pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect::<Vec<_>>().join(" ")
}

/// Accumulates elements in pixel coordinates.
struct Svg {
    width: f64,
    height: f64,
    body: String,
}

impl Svg {
    fn new(width: f64, height: f64) -> Self {
        let mut svg = Self { width, height, body: String::new() };
        svg.rect((0.0, 0.0), width, height, r#"class="background" fill="white""#);
        svg
    }

    fn raw(&mut self, element: String) {
        self.body.push_str(&element);
        self.body.push('\n');
    }

    fn rect(&mut self, at: (f64, f64), w: f64, h: f64, style: &str) {
        self.raw(format!(r#"<rect x="{:.2}" y="{:.2}" width="{w:.2}" height="{h:.2}" {style}/>"#, at.0, at.1));
    }

    fn line(&mut self, a: (f64, f64), b: (f64, f64), style: &str) {
        self.raw(format!(
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" {style}/>"#,
            a.0, a.1, b.0, b.1
        ));
    }

    fn polyline(&mut self, pts: &[(f64, f64)], style: &str) {
        self.raw(format!(r#"<polyline points="{}" fill="none" {style}/>"#, points(pts)));
    }

    fn circle(&mut self, c: (f64, f64), r: f64, style: &str) {
        self.raw(format!(r#"<circle cx="{:.2}" cy="{:.2}" r="{r:.2}" {style}/>"#, c.0, c.1));
    }

    fn text(&mut self, at: (f64, f64), size: f64, style: &str, content: &str) {
        self.raw(format!(
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="{size}" {style}>{}</text>"#,
            at.0,
            at.1,
            escape(content)
        ));
    }

    fn finish(self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#,
            w = self.width,
            h = self.height
        );
        out.push_str(&self.body);
        out.push_str("</svg>\n");
        out
    }
}

/// World-to-pixel mapping with y pointing up in the world.
#[derive(Clone, Copy, Debug)]
struct View {
    min: Vec2,
    max: Vec2,
    scale: f64,
    left: f64,
    top: f64,
}

impl View {
    fn fit(min: Vec2, max: Vec2, width: f64, left: f64, top: f64) -> Self {
        let span = (max.x - min.x).max(max.y - min.y).max(1e-9);
        Self { min, max, scale: width / span, left, top }
    }

    fn px(&self, p: Vec2) -> (f64, f64) {
        (self.left + (p.x - self.min.x) * self.scale, self.top + (self.max.y - p.y) * self.scale)
    }

    fn width(&self) -> f64 {
        (self.max.x - self.min.x) * self.scale
    }

    fn height(&self) -> f64 {
        (self.max.y - self.min.y) * self.scale
    }
}

fn bounds(pts: impl IntoIterator<Item = Vec2>) -> Option<(Vec2, Vec2)> {
    pts.into_iter().fold(None, |acc, p| match acc {
        None => Some((p, p)),
        Some((lo, hi)) => Some((Vec2::new(lo.x.min(p.x), lo.y.min(p.y)), Vec2::new(hi.x.max(p.x), hi.y.max(p.y)))),
    })
}

fn padded(lo: Vec2, hi: Vec2) -> (Vec2, Vec2) {
    let pad = 0.08 * (hi.x - lo.x).max(hi.y - lo.y) + 1.0;
    (lo - Vec2::new(pad, pad), hi + Vec2::new(pad, pad))
}

/// An imagined layout as stored in a trace.
#[derive(Clone, Copy, Debug)]
pub struct Layout<'a> {
    pub masses: &'a [MassRecord],
    pub springs: &'a [SpringRecord],
    pub goal: Option<[f64; 2]>,
}

impl<'a> Layout<'a> {
    /// Layout carried by an imagine event, if it is one.
    pub fn of(event: &'a Event) -> Option<Self> {
        match event {
            Event::Imagine { masses, springs, goal, .. } => Some(Self { masses, springs, goal: *goal }),
            _ => None,
        }
    }

    fn positions(&self) -> impl Iterator<Item = Vec2> + '_ {
        self.masses.iter().map(|m| Vec2::new(m.x, m.y))
    }
}

fn is_anchor(name: &Toponym) -> bool {
    name.as_str().starts_with('@')
}

fn draw_layout(svg: &mut Svg, view: &View, layout: &Layout, colour: &str, labels: bool) {
    let at = |i: usize| layout.masses.get(i).map(|m| view.px(Vec2::new(m.x, m.y)));
    for s in layout.springs {
        let Some(pts) = s.ends.iter().map(|&i| at(i)).collect::<Option<Vec<_>>>() else {
            continue;
        };
        let width = if s.observation { 2.5 } else { 1.0 };
        let (class, dash) = match s.style {
            SpringStyle::Distance => ("spring distance", ""),
            SpringStyle::Angle => ("spring angle", r#" stroke-dasharray="5 3""#),
        };
        let obs = if s.observation { " observation" } else { "" };
        let style = format!(r#"class="{class}{obs}" stroke="{colour}" stroke-width="{width}"{dash} stroke-opacity="0.7""#);
        if pts.len() == 2 {
            svg.line(pts[0], pts[1], &style);
        } else {
            svg.polyline(&pts, &style);
        }
    }
    for m in layout.masses {
        let p = view.px(Vec2::new(m.x, m.y));
        if is_anchor(&m.name) {
            svg.rect((p.0 - 2.5, p.1 - 2.5), 5.0, 5.0, r##"class="anchor" fill="#777""##);
            continue;
        }
        let fill = if m.fixed { colour } else { "white" };
        svg.circle(p, 5.0, &format!(r#"class="mass" fill="{fill}" stroke="{colour}" stroke-width="1.5""#));
        if labels {
            svg.text((p.0 + 7.0, p.1 - 6.0), 11.0, &format!(r#"class="label" fill="{colour}""#), m.name.as_str());
        }
    }
    if let Some([x, y]) = layout.goal {
        let (cx, cy) = view.px(Vec2::new(x, y));
        let style = r##"class="goal-estimate" stroke="#d62728" stroke-width="2.5""##;
        svg.line((cx - 7.0, cy - 7.0), (cx + 7.0, cy + 7.0), style);
        svg.line((cx - 7.0, cy + 7.0), (cx + 7.0, cy - 7.0), style);
    }
}

/// Total energy against simulated time inside the given pixel box.
fn draw_energy(svg: &mut Svg, samples: &[[f64; 3]], left: f64, top: f64, width: f64, height: f64) {
    svg.rect((left, top), width, height, r##"class="energy-frame" fill="none" stroke="#999""##);
    svg.text((left, top - 6.0), 11.0, r#"fill="black""#, "total energy against simulated time");
    if samples.is_empty() {
        return;
    }
    let t_max = samples.last().map_or(0.0, |s| s[0]).max(1e-9);
    let e_max = samples.iter().map(|s| s[1] + s[2]).fold(0.0, f64::max).max(1e-12);
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .map(|s| (left + s[0] / t_max * width, top + height - (s[1] + s[2]) / e_max * height))
        .collect();
    svg.polyline(&pts, r##"class="energy" stroke="#1f77b4" stroke-width="1.5""##);
    svg.text(
        (left + 4.0, top + 12.0),
        10.0,
        r##"fill="#555""##,
        &format!("peak {e_max:.4}, end t = {t_max:.2} s"),
    );
}

/// An imagined layout above its energy history. With no layout the canvas
/// is left empty.
pub fn render_imagine(layout: Option<&Layout>, energy: &[[f64; 3]], caption: &str) -> String {
    let Some(layout) = layout.filter(|l| !l.masses.is_empty()) else {
        return Svg::new(LAYOUT_WIDTH + 2.0 * MARGIN, LAYOUT_WIDTH / 2.0).finish();
    };
    let (lo, hi) = bounds(layout.positions()).expect("non-empty layout");
    let (lo, hi) = padded(lo, hi);
    let view = View::fit(lo, hi, LAYOUT_WIDTH, MARGIN, MARGIN + 16.0);
    let energy_top = view.top + view.height() + 2.0 * MARGIN;
    let mut svg = Svg::new(LAYOUT_WIDTH + 2.0 * MARGIN, energy_top + ENERGY_HEIGHT + MARGIN);
    svg.text((MARGIN, MARGIN), 13.0, r#"class="caption" fill="black""#, caption);
    draw_layout(&mut svg, &view, layout, "#333", true);
    draw_energy(&mut svg, energy, MARGIN, energy_top, LAYOUT_WIDTH, ENERGY_HEIGHT);
    svg.finish()
}

fn is_label_for(clauses: &[Clause], goal: &Toponym) -> bool {
    clauses
        .iter()
        .any(|c| matches!(c, Clause::Locational(l) if l.is_label() && &l.toponym == goal))
}

/// Replays a trace: grid, robot path, cues (observed ones bold) and the
/// imagined layout. `frame` counts imagine events from 1; the picture then
/// shows the trial as it stood when that relaxation finished.
pub fn render_replay(events: &[TraceEvent], frame: Option<usize>) -> Result<String, ReplayError> {
    let Some(Event::World { scenario, goal, seed }) = events.first().map(|e| &e.event) else {
        return Err(ReplayError::NoHeader);
    };
    let scenario = Scenario::from_doc(scenario.clone())?;
    let imagines: Vec<usize> = events
        .iter()
        .enumerate()
        .filter(|(_, e)| matches!(e.event, Event::Imagine { .. }))
        .map(|(i, _)| i)
        .collect();
    let (shown, layout_at) = match frame {
        Some(k) => {
            let &at = k.checked_sub(1).and_then(|i| imagines.get(i)).ok_or(ReplayError::FrameOutOfRange {
                frame: k,
                available: imagines.len(),
            })?;
            (&events[..=at], Some(at))
        }
        None => (events, imagines.last().copied()),
    };
    let layout = layout_at.and_then(|i| Layout::of(&events[i].event));

    let map = &scenario.world.map;
    let res = map.resolution();
    let origin = map.origin();
    let grid_lo = Vec2::new(origin.x, origin.y - map.height() as f64 * res);
    let grid_hi = Vec2::new(origin.x + map.width() as f64 * res, origin.y);
    let extra = layout.iter().flat_map(|l| l.positions().collect::<Vec<_>>());
    let (lo, hi) = bounds([grid_lo, grid_hi].into_iter().chain(extra)).expect("grid corners");
    let pad = Vec2::new(res, res);
    let view = View::fit(lo - pad, hi + pad, LAYOUT_WIDTH * 1.5, MARGIN, MARGIN + 16.0);
    let mut svg = Svg::new(view.width() + 2.0 * MARGIN, view.top + view.height() + MARGIN);

    // walls as horizontal runs
    let cell_px = res * view.scale;
    for row in 0..map.height() {
        let mut col = 0;
        while col < map.width() {
            if !map.is_wall(Cell::new(col, row)) {
                col += 1;
                continue;
            }
            let start = col;
            while col < map.width() && map.is_wall(Cell::new(col, row)) {
                col += 1;
            }
            let corner = Vec2::new(origin.x + start as f64 * res, origin.y - row as f64 * res);
            let (x, y) = view.px(corner);
            svg.rect((x, y), (col - start) as f64 * cell_px, cell_px, r##"class="wall" fill="#bbb""##);
        }
    }

    if let Some(layout) = &layout {
        draw_layout(&mut svg, &view, layout, "#e6850e", true);
    }

    let observed: Vec<(&str, &[Clause])> = shown
        .iter()
        .filter_map(|e| match &e.event {
            Event::Cue { id, clauses, .. } => Some((id.as_str(), clauses.as_slice())),
            _ => None,
        })
        .collect();
    for cue in &scenario.world.cues {
        let p = view.px(cue.position);
        if observed.iter().any(|(id, _)| *id == cue.id) {
            svg.circle(p, 5.0, r#"class="cue observed" fill="black" stroke="black" stroke-width="2.5""#);
            svg.text((p.0 + 7.0, p.1 + 12.0), 11.0, r#"class="cue-label" font-weight="bold" fill="black""#, &cue.id);
        } else {
            svg.circle(p, 4.0, r##"class="cue" fill="none" stroke="#888" stroke-width="1""##);
            svg.text((p.0 + 7.0, p.1 + 12.0), 10.0, r##"class="cue-label" fill="#888""##, &cue.id);
        }
    }

    let path: Vec<(f64, f64)> = shown
        .iter()
        .filter_map(|e| match e.event {
            Event::Pose { x, y, .. } => Some(view.px(Vec2::new(x, y))),
            _ => None,
        })
        .collect();
    if let (Some(&first), Some(&last)) = (path.first(), path.last()) {
        svg.polyline(&path, r##"class="path" stroke="#1f77b4" stroke-width="2""##);
        svg.circle(first, 4.0, r##"class="start" fill="#2ca02c""##);
        svg.circle(last, 4.0, r##"class="robot" fill="#1f77b4""##);
    }

    let outcome = shown.iter().find_map(|e| match &e.event {
        Event::Goal { success, distance, reason } => Some((*success, *distance, reason.clone())),
        _ => None,
    });
    // the path ends where the goal label came into view; close it to the cue
    if let (Some((true, _, _)), Some(&last)) = (&outcome, path.last()) {
        let sighted = observed.iter().rev().find(|(_, clauses)| is_label_for(clauses, goal));
        let cue = sighted.and_then(|(id, _)| scenario.world.cues.iter().find(|c| c.id == *id));
        if let Some(cue) = cue {
            svg.line(last, view.px(cue.position), r##"class="sighting" stroke="#1f77b4" stroke-width="1.5" stroke-dasharray="2 3""##);
        }
    }

    let mut caption = format!("{}: goal {goal}, seed {seed}", scenario.name());
    if let Some(k) = frame {
        let _ = write!(caption, ", frame {k} of {}", imagines.len());
    }
    if let Some((success, distance, reason)) = outcome {
        let verdict = if success { "found" } else { "not found" };
        let _ = write!(caption, ", {verdict} after {distance:.2} m ({reason})");
    }
    svg.text((MARGIN, MARGIN), 13.0, r#"class="caption" fill="black""#, &caption);
    Ok(svg.finish())
}
