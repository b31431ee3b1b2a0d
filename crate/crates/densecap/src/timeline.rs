//! Static timelines of predicted and ground-truth intervals.
//!
//! Each track holds one or more lanes; overlapping intervals are stacked on
//! separate lanes, each going to the first lane where it fits.

use std::fmt::Write;

use densecap_core::eval::Segment;

#[derive(Debug, Clone, PartialEq)]
pub struct Bar {
    pub start: f64,
    pub end: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub name: String,
    pub lanes: Vec<Vec<Bar>>,
}

impl Track {
    pub fn bars(&self) -> usize {
        self.lanes.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    pub video_id: String,
    pub duration: f64,
    pub tracks: Vec<Track>,
}

fn stack(name: &str, segments: &[Segment]) -> Track {
    let mut order: Vec<usize> = (0..segments.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&segments[a].timestamp, &segments[b].timestamp);
        x.start.total_cmp(&y.start).then(x.end.total_cmp(&y.end)).then(a.cmp(&b))
    });
    let mut lanes: Vec<Vec<Bar>> = Vec::new();
    for k in order {
        let s = &segments[k];
        let bar = Bar {
            start: s.timestamp.start,
            end: s.timestamp.end,
            label: s.sentence.clone(),
        };
        match lanes.iter_mut().find(|l| l.last().is_none_or(|b| b.end <= bar.start)) {
            Some(lane) => lane.push(bar),
            None => lanes.push(vec![bar]),
        }
    }
    Track {
        name: name.into(),
        lanes,
    }
}

impl Timeline {
    /// Ground truth first, then predictions. An empty prediction list gives
    /// a ground-truth-only timeline.
    pub fn new(video_id: &str, duration: f64, ground_truth: &[Segment], predictions: &[Segment]) -> Self {
        let mut tracks = vec![stack("ground truth", ground_truth)];
        if !predictions.is_empty() {
            tracks.push(stack("predicted", predictions));
        }
        Timeline {
            video_id: video_id.into(),
            duration,
            tracks,
        }
    }

    fn span(&self) -> f64 {
        let end = self
            .tracks
            .iter()
            .flat_map(|t| t.lanes.iter().flatten())
            .map(|b| b.end)
            .fold(self.duration, f64::max);
        if end > 0.0 {
            end
        } else {
            1.0
        }
    }

    pub fn render_text(&self, width: usize) -> String {
        let width = width.max(10);
        let span = self.span();
        let col = |t: f64| ((t / span) * width as f64).round() as usize;
        let mut out = String::new();
        let _ = writeln!(out, "{} ({:.1} s)", self.video_id, self.duration);
        for track in &self.tracks {
            let blank = [Vec::new()];
            let lanes = if track.lanes.is_empty() { &blank[..] } else { &track.lanes[..] };
            for (n, lane) in lanes.iter().enumerate() {
                let mut row = vec![b'.'; width];
                for bar in lane {
                    let (a, b) = (col(bar.start).min(width - 1), col(bar.end).min(width));
                    for c in &mut row[a..b.max(a + 1)] {
                        *c = b'#';
                    }
                }
                let name = if n == 0 { track.name.as_str() } else { "" };
                let _ = writeln!(out, "{name:>12} |{}|", String::from_utf8(row).expect("ascii"));
            }
            for bar in track.lanes.iter().flatten() {
                let _ = writeln!(out, "{:>12}  [{:.1}, {:.1}] {}", "", bar.start, bar.end, bar.label);
            }
        }
        out
    }

    pub fn render_svg(&self) -> String {
        const WIDTH: f64 = 800.0;
        const LEFT: f64 = 110.0;
        const LANE: f64 = 22.0;
        let span = self.span();
        let x = |t: f64| LEFT + (t / span) * (WIDTH - LEFT - 10.0);
        let lanes: usize = self.tracks.iter().map(|t| t.lanes.len().max(1)).sum();
        let height = 30.0 + LANE * lanes as f64 + 8.0 * self.tracks.len() as f64 + 20.0;
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(out, r#"<text x="4" y="16">{} ({:.1} s)</text>"#, escape(&self.video_id), self.duration);
        let mut y = 30.0;
        for (t, track) in self.tracks.iter().enumerate() {
            let class = if t == 0 { "gt" } else { "pred" };
            let fill = if t == 0 { "#6a9955" } else { "#4f7cc0" };
            let _ = writeln!(out, r#"<text x="4" y="{:.1}">{}</text>"#, y + 14.0, escape(&track.name));
            for lane in &track.lanes {
                for bar in lane {
                    let _ = writeln!(
                        out,
                        r#"<rect class="{class}" x="{:.2}" y="{y:.1}" width="{:.2}" height="{:.1}" fill="{fill}"><title>[{:.1}, {:.1}] {}</title></rect>"#,
                        x(bar.start),
                        (x(bar.end) - x(bar.start)).max(1.0),
                        LANE - 4.0,
                        bar.start,
                        bar.end,
                        escape(&bar.label)
                    );
                }
                y += LANE;
            }
            if track.lanes.is_empty() {
                y += LANE;
            }
            y += 8.0;
        }
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#888"/>"##,
            x(span)
        );
        let _ = writeln!(out, r#"<text x="{LEFT}" y="{:.1}">0</text>"#, y + 14.0);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{span:.1} s</text>"#, x(span), y + 14.0);
        out.push_str("</svg>\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
