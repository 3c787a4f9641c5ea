//! Highlighted-timeline reports: tokens colored by their bits on a cohort
//! percentile scale, rendered as ANSI text or SVG.

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::infomeasure::{EventBand, ScoredRecord};
use crate::stats::linear_quantile_sorted;
use crate::tokenizer::PREFIX_LEN;

/// Token-bit percentiles marking the lower edge of each highlighted bucket.
pub const SCALE_PERCENTILES: [u8; 5] = [50, 75, 90, 95, 99];
pub const DEFAULT_FIRST_N: usize = 210;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no token scores to fit a color scale")]
    EmptyScale,
    #[error("no scored timeline with id `{0}`")]
    UnknownId(String),
    #[error("color scale edges must be non-decreasing and not NaN")]
    BadScale,
}

/// Bucket edges in bits; bucket k holds scores at or above edge k−1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ColorScale {
    pub edges: [f64; 5],
}

impl ColorScale {
    pub fn new(edges: [f64; 5]) -> Result<Self, ReportError> {
        if edges.iter().any(|e| e.is_nan()) || edges.windows(2).any(|w| w[0] > w[1]) {
            return Err(ReportError::BadScale);
        }
        Ok(Self { edges })
    }

    /// Percentiles of every token score in the scored cohort.
    pub fn fit(records: &[ScoredRecord]) -> Result<Self, ReportError> {
        let mut bits: Vec<f64> = records.iter().flat_map(display_scores).collect();
        if bits.is_empty() {
            return Err(ReportError::EmptyScale);
        }
        bits.sort_by(f64::total_cmp);
        Self::new(SCALE_PERCENTILES.map(|p| linear_quantile_sorted(&bits, f64::from(p) / 100.0)))
    }

    /// 0 below the median edge, up to 5 at or above the last edge.
    pub fn bucket(&self, bits: f64) -> u8 {
        self.edges.iter().filter(|e| bits >= **e).count() as u8
    }
}

fn display_scores(r: &ScoredRecord) -> impl Iterator<Item = f64> + '_ {
    r.bits.iter().enumerate().map(|(i, b)| if r.infinite.contains(&i) { f64::INFINITY } else { *b })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    /// Zero-based token position.
    pub index: usize,
    pub token: String,
    pub bits: f64,
    pub infinite: bool,
    pub bucket: u8,
    /// Zero-based event number, `None` for prefix and suffix tokens.
    pub event: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventAnnotation {
    pub event: usize,
    /// 1-based inclusive token span.
    pub start: usize,
    pub end: usize,
    pub bits: f64,
    pub band: Option<EventBand>,
    /// False when the span runs past the shown tokens.
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LegendEntry {
    pub bucket: u8,
    pub percentile: u8,
    pub min_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HighlightReport {
    pub hospitalization_id: String,
    pub total_tokens: usize,
    pub cells: Vec<Cell>,
    pub events: Vec<EventAnnotation>,
    pub legend: Vec<LegendEntry>,
}

impl HighlightReport {
    /// The first `first_n` tokens of one scored timeline.
    pub fn build(record: &ScoredRecord, scale: &ColorScale, first_n: usize) -> Self {
        let shown = first_n.min(record.tokens.len());
        let mut event_of = vec![None; shown];
        let mut events = Vec::new();
        for (k, e) in record.events.iter().enumerate() {
            if e.span.start > shown {
                break;
            }
            for slot in &mut event_of[e.span.start - 1..e.span.end.min(shown)] {
                *slot = Some(k);
            }
            events.push(EventAnnotation {
                event: k,
                start: e.span.start,
                end: e.span.end,
                bits: e.bits,
                band: e.band,
                complete: e.span.end <= shown,
            });
        }
        let cells = (0..shown)
            .map(|i| {
                let infinite = record.infinite.contains(&i);
                let bits = record.bits[i];
                Cell {
                    index: i,
                    token: record.tokens[i].clone(),
                    bits,
                    infinite,
                    bucket: scale.bucket(if infinite { f64::INFINITY } else { bits }),
                    event: event_of[i],
                }
            })
            .collect();
        let legend = SCALE_PERCENTILES
            .iter()
            .zip(scale.edges)
            .enumerate()
            .map(|(k, (p, e))| LegendEntry {
                bucket: k as u8 + 1,
                percentile: *p,
                min_bits: e,
            })
            .collect();
        Self {
            hospitalization_id: record.hospitalization_id.clone(),
            total_tokens: record.tokens.len(),
            cells,
            events,
            legend,
        }
    }

    /// Cells grouped into display lines: prefix, one line per event, suffix.
    pub fn lines(&self) -> Vec<(String, Vec<&Cell>)> {
        let mut lines: Vec<(String, Vec<&Cell>)> = Vec::new();
        let mut current: Option<Option<usize>> = None;
        for c in &self.cells {
            if current != Some(c.event) {
                let label = match c.event {
                    Some(k) => self.event_label(k),
                    None if c.index < PREFIX_LEN => "prefix".to_string(),
                    None => "suffix".to_string(),
                };
                lines.push((label, Vec::new()));
                current = Some(c.event);
            }
            lines.last_mut().expect("line was pushed").1.push(c);
        }
        lines
    }

    fn event_label(&self, k: usize) -> String {
        let a = self.events.iter().find(|e| e.event == k).expect("annotated event");
        let band = match a.band {
            Some(EventBand::Ge99) => " E>=p99",
            Some(EventBand::Ge95Lt99) => " E>=p95",
            _ => "",
        };
        let partial = if a.complete { "" } else { " (cut)" };
        format!("e{} {:.2} bits{band}{partial}", k + 1, a.bits)
    }

    pub fn render_ansi(&self) -> String {
        let mut s = format!(
            "{}: first {} of {} tokens\nscale:",
            self.hospitalization_id,
            self.cells.len(),
            self.total_tokens
        );
        for l in &self.legend {
            let _ = write!(s, " {}", ansi_paint(l.bucket, &format!(">=p{} {:.2}", l.percentile, l.min_bits)));
        }
        s.push('\n');
        for (label, cells) in self.lines() {
            let _ = write!(s, "{label:<24}");
            for c in cells {
                let _ = write!(s, " {}", ansi_paint(c.bucket, &format!("{} {}", c.token, bits_text(c))));
            }
            s.push('\n');
        }
        s
    }

    pub fn render_svg(&self) -> String {
        const WIDTH: f64 = 1200.0;
        const LABEL: f64 = 170.0;
        const ROW: f64 = 40.0;
        const CELL_H: f64 = 32.0;
        const CHAR: f64 = 7.2;
        let mut body = String::new();
        let mut y = 12.0;
        let _ = write!(
            body,
            r#"<text x="10" y="{:.1}" font-size="14" font-weight="bold">{}: first {} of {} tokens</text>"#,
            y + 12.0,
            xml_escape(&self.hospitalization_id),
            self.cells.len(),
            self.total_tokens
        );
        y += 28.0;
        let mut x = 10.0;
        for l in &self.legend {
            let text = format!(">=p{} {:.2} bits", l.percentile, l.min_bits);
            let w = CHAR * text.chars().count() as f64 + 10.0;
            let (fill, ink) = svg_colors(l.bucket);
            let _ = write!(
                body,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{w:.1}" height="20" fill="{fill}" stroke="{STROKE}"/><text x="{:.1}" y="{:.1}" font-size="12" fill="{ink}">{}</text>"#,
                x + 5.0,
                y + 14.0,
                xml_escape(&text)
            );
            x += w + 6.0;
        }
        y += 32.0;
        for (label, cells) in self.lines() {
            let _ = write!(body, r#"<text x="10" y="{:.1}" font-size="11" fill="{STROKE_DARK}">{}</text>"#, y + 20.0, xml_escape(&label));
            let mut x = LABEL;
            for c in cells {
                let bits = bits_text(c);
                let chars = c.token.chars().count().max(bits.len());
                let w = CHAR * chars as f64 + 10.0;
                if x + w > WIDTH - 10.0 && x > LABEL {
                    x = LABEL;
                    y += ROW;
                }
                let (fill, ink) = svg_colors(c.bucket);
                let _ = write!(
                    body,
                    r#"<g><title>{} {} bits</title><rect x="{x:.1}" y="{y:.1}" width="{w:.1}" height="{CELL_H:.1}" rx="3" fill="{fill}" stroke="{STROKE}"/><text x="{:.1}" y="{:.1}" font-size="12" fill="{ink}">{}</text><text x="{:.1}" y="{:.1}" font-size="10" fill="{ink}">{bits}</text></g>"#,
                    xml_escape(&c.token),
                    bits,
                    x + 5.0,
                    y + 14.0,
                    xml_escape(&c.token),
                    x + 5.0,
                    y + 27.0
                );
                x += w + 4.0;
            }
            y += ROW;
        }
        format!(
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0}" height="{:.0}" font-family="monospace"><rect width="100%" height="100%" fill="white"/>{body}</svg>
"#,
            y + 10.0
        )
    }
}

const STROKE: &str = "#cccccc";
const STROKE_DARK: &str = "#444444";

fn bits_text(c: &Cell) -> String {
    if c.infinite {
        "inf".to_string()
    } else {
        format!("{:.2}", c.bits)
    }
}

/// 256-color background per bucket; bucket 0 is left plain.
fn ansi_paint(bucket: u8, text: &str) -> String {
    const BG: [u8; 5] = [230, 222, 214, 208, 196];
    match bucket {
        0 => text.to_string(),
        b => format!("\x1b[48;5;{};38;5;16m{text}\x1b[0m", BG[usize::from(b) - 1]),
    }
}

fn svg_colors(bucket: u8) -> (&'static str, &'static str) {
    match bucket {
        0 => ("#ffffff", "#000000"),
        1 => ("#fff3b0", "#000000"),
        2 => ("#ffd166", "#000000"),
        3 => ("#f9a03f", "#000000"),
        4 => ("#f3722c", "#000000"),
        _ => ("#c1121f", "#ffffff"),
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Find one record by hospitalization id.
pub fn find_record<'a>(records: &'a [ScoredRecord], id: &str) -> Result<&'a ScoredRecord, ReportError> {
    records
        .iter()
        .find(|r| r.hospitalization_id == id)
        .ok_or_else(|| ReportError::UnknownId(id.to_string()))
}
