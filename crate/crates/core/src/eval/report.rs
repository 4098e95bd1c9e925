use std::io::Cursor;

use image::{Rgb, RgbImage};

use crate::model::MatchType;
use crate::render::default_palette;
use crate::render::font::{draw_text, text_height, text_width};

use super::score::{EvalReport, Percent};
use super::EvalError;

/// One leaderboard line: overall accuracy then the eight match types in column order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LeaderboardRow {
    pub model: String,
    pub overall: Percent,
    pub per_type: [Option<Percent>; 8],
}

impl From<&EvalReport> for LeaderboardRow {
    fn from(r: &EvalReport) -> Self {
        let mut per_type = [None; 8];
        for (i, t) in MatchType::ALL.iter().enumerate() {
            per_type[i] = r.per_type.iter().find(|(m, _)| m == t).and_then(|(_, s)| s.accuracy);
        }
        Self {
            model: r.model.clone(),
            overall: r.overall,
            per_type,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Csv,
    Plot,
}

impl std::str::FromStr for ReportFormat {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "csv" => Ok(ReportFormat::Csv),
            "plot" => Ok(ReportFormat::Plot),
            _ => Err(EvalError::UnknownFormat(s.to_string())),
        }
    }
}

fn header() -> Vec<String> {
    let mut h = vec!["Model".to_string(), "Overall".to_string()];
    h.extend(MatchType::ALL.iter().map(|t| t.code().to_string()));
    h
}

fn cells(r: &LeaderboardRow) -> Vec<String> {
    let mut c = vec![r.model.clone(), r.overall.to_string()];
    c.extend(r.per_type.iter().map(|p| p.map_or("-".to_string(), |p| p.to_string())));
    c
}

pub fn render_table(rows: &[LeaderboardRow]) -> String {
    let mut grid = vec![header()];
    grid.extend(rows.iter().map(cells));
    let widths: Vec<usize> = (0..10).map(|i| grid.iter().map(|r| r[i].len()).max().unwrap_or(0)).collect();
    let line = |r: &[String]| {
        let parts: Vec<String> = r
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        format!("| {} |\n", parts.join(" | "))
    };
    let mut out = line(&grid[0]);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&format!("|-{}-|\n", rule.join("-|-")));
    for r in &grid[1..] {
        out.push_str(&line(r));
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render_csv(rows: &[LeaderboardRow]) -> String {
    let mut out = header().join(",");
    out.push('\n');
    for r in rows {
        let c: Vec<String> = cells(r).iter().map(|s| csv_field(s)).collect();
        out.push_str(&c.join(","));
        out.push('\n');
    }
    out
}

fn split_csv_line(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match (c, quoted) {
            ('"', true) if chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            ('"', _) => quoted = !quoted,
            (',', false) => fields.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    fields.push(cur);
    fields
}

/// Inverse of the CSV emitter.
pub fn parse_csv(text: &str) -> Result<Vec<LeaderboardRow>, EvalError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let head = lines.next().ok_or_else(|| EvalError::Csv("empty input".into()))?;
    if split_csv_line(head) != header() {
        return Err(EvalError::Csv(format!("unexpected header {head:?}")));
    }
    lines
        .map(|l| {
            let f = split_csv_line(l);
            if f.len() != 10 {
                return Err(EvalError::Csv(format!("expected 10 fields in {l:?}")));
            }
            let pct = |s: &str| s.parse::<Percent>().map_err(EvalError::Csv);
            let mut per_type = [None; 8];
            for (slot, s) in per_type.iter_mut().zip(&f[2..]) {
                *slot = if s == "-" { None } else { Some(pct(s)?) };
            }
            Ok(LeaderboardRow {
                model: f[0].clone(),
                overall: pct(&f[1])?,
                per_type,
            })
        })
        .collect()
}

const PANEL_W: u32 = 360;
const PANEL_H: u32 = 200;
const BAR_W: u32 = 28;
const GAP: u32 = 12;
const BASE_Y: u32 = 170;
const CHART_H: u32 = 140;

/// Per-type bar chart, one panel per model stacked vertically.
pub fn render_plot(rows: &[LeaderboardRow]) -> RgbImage {
    let colors = default_palette(8).expect("8 colours");
    let mut img = RgbImage::from_pixel(PANEL_W, PANEL_H * rows.len().max(1) as u32, Rgb([255, 255, 255]));
    for (k, r) in rows.iter().enumerate() {
        let top = k as u32 * PANEL_H;
        let title = format!("{} {}%", r.model.to_uppercase(), r.overall);
        draw_text(&mut img, 8, top as i64 + 6, &title, 2, [0, 0, 0]);
        for x in 8..PANEL_W - 8 {
            img.put_pixel(x, top + BASE_Y, Rgb([0, 0, 0]));
        }
        for (i, t) in MatchType::ALL.iter().enumerate() {
            let x0 = 16 + i as u32 * (BAR_W + GAP);
            if let Some(p) = r.per_type[i] {
                let h = (p.hundredths() as u64 * CHART_H as u64 / 10_000) as u32;
                for y in top + BASE_Y - h..top + BASE_Y {
                    for x in x0..x0 + BAR_W {
                        img.put_pixel(x, y, Rgb(colors[i]));
                    }
                }
            }
            let code = t.code();
            let lx = x0 + (BAR_W - text_width(code, 2)) / 2;
            draw_text(&mut img, lx as i64, (top + BASE_Y + 6) as i64, code, 2, [0, 0, 0]);
            debug_assert!(BASE_Y + 6 + text_height(2) < PANEL_H);
        }
    }
    img
}

/// Serialized leaderboard in the requested format (PNG bytes for `Plot`).
pub fn emit_report(reports: &[EvalReport], format: ReportFormat) -> Result<Vec<u8>, EvalError> {
    let rows: Vec<LeaderboardRow> = reports.iter().map(LeaderboardRow::from).collect();
    emit_rows(&rows, format)
}

pub fn emit_rows(rows: &[LeaderboardRow], format: ReportFormat) -> Result<Vec<u8>, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::EmptyReport);
    }
    Ok(match format {
        ReportFormat::Table => render_table(rows).into_bytes(),
        ReportFormat::Csv => render_csv(rows).into_bytes(),
        ReportFormat::Plot => {
            let mut buf = Cursor::new(Vec::new());
            render_plot(rows)
                .write_to(&mut buf, image::ImageFormat::Png)
                .map_err(|e| EvalError::Io(e.to_string()))?;
            buf.into_inner()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(model: &str, vals: [&str; 9]) -> LeaderboardRow {
        let mut per_type = [None; 8];
        for (s, v) in per_type.iter_mut().zip(&vals[1..]) {
            *s = Some(v.parse().unwrap());
        }
        LeaderboardRow {
            model: model.into(),
            overall: vals[0].parse().unwrap(),
            per_type,
        }
    }

    #[test]
    fn csv_round_trip_and_layout() {
        let rows = vec![
            row("m,1", ["42.65", "39.28", "65.52", "60.75", "67.53", "32.28", "44.00", "43.18", "50.00"]),
            LeaderboardRow {
                model: "empty \"q\"".into(),
                overall: Percent::from_ratio(1, 3),
                per_type: [None; 8],
            },
        ];
        let csv = render_csv(&rows);
        assert!(csv.starts_with("Model,Overall,CL,SP,TM,SZ,RP,OO,BR,OM\n"));
        assert_eq!(parse_csv(&csv).unwrap(), rows);
        let table = render_table(&rows[..1]);
        let cols = table.lines().nth(2).unwrap().split('|').filter(|s| !s.is_empty()).count();
        assert_eq!(cols, 10);
    }

    #[test]
    fn plot_is_stable() {
        let rows = vec![row("x", ["10.00", "1.00", "2.00", "3.00", "4.00", "5.00", "6.00", "7.00", "100.00"])];
        let a = emit_rows(&rows, ReportFormat::Plot).unwrap();
        assert_eq!(a, emit_rows(&rows, ReportFormat::Plot).unwrap());
        assert!(emit_rows(&[], ReportFormat::Table).is_err());
        assert!("svg".parse::<ReportFormat>().is_err());
    }
}
