use serde::Serialize;

/// Vertex of a deposition path. `e` and `f` belong to the segment that ends
/// here, so the first vertex of a path carries `e == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PathVertex {
    pub x: f64,
    pub y: f64,
    /// Height as sliced; the emitted height is `z + delta`.
    pub z: f64,
    pub e: f64,
    /// mm/s
    pub f: f64,
    pub delta: f64,
}

impl PathVertex {
    pub fn new(x: f64, y: f64, z: f64, e: f64, f: f64) -> Self {
        PathVertex { x, y, z, e, f, delta: 0.0 }
    }

    pub fn top(&self) -> f64 {
        self.z + self.delta
    }

    pub fn xy_dist(&self, o: &PathVertex) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PathKind {
    Perimeter,
    Infill,
    #[default]
    Unknown,
}

impl PathKind {
    /// Classifies a slicer `;TYPE:` tag.
    pub fn from_tag(tag: &str) -> PathKind {
        let t = tag.trim().to_ascii_uppercase();
        if t.contains("PERIMETER") || t.contains("WALL") || t.contains("SHELL") {
            PathKind::Perimeter
        } else if t.contains("FILL") || t.contains("SKIN") {
            PathKind::Infill
        } else {
            PathKind::Unknown
        }
    }
}

pub const CLOSED_TOL: f64 = 1e-6;

/// Input line a path vertex was read from, with the vertex as read.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceLine {
    pub text: String,
    /// Byte span of the `E` word value inside `text`.
    pub e_span: Option<(usize, usize)>,
    pub vertex: PathVertex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Toolpath {
    pub vertices: Vec<PathVertex>,
    /// Trailing comments of the source lines, parallel to `vertices`.
    pub comments: Vec<Option<String>>,
    /// Parallel to `vertices` for parsed paths, empty for built ones. Lines
    /// whose vertex is unchanged are written back as read.
    pub source: Vec<Option<SourceLine>>,
    pub closed: bool,
    pub kind: PathKind,
    pub layer: usize,
    pub modified: bool,
}

impl Toolpath {
    pub fn new(vertices: Vec<PathVertex>, kind: PathKind, layer: usize) -> Self {
        let comments = vec![None; vertices.len()];
        let mut p = Toolpath { vertices, comments, source: Vec::new(), closed: false, kind, layer, modified: false };
        p.update_closed();
        p
    }

    pub fn update_closed(&mut self) {
        self.closed = match (self.vertices.first(), self.vertices.last()) {
            (Some(a), Some(b)) if self.vertices.len() > 2 => {
                (a.x - b.x).abs() <= CLOSED_TOL && (a.y - b.y).abs() <= CLOSED_TOL && (a.z - b.z).abs() <= CLOSED_TOL
            }
            _ => false,
        };
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn total_e(&self) -> f64 {
        self.vertices.iter().map(|v| v.e).sum()
    }

    pub fn xy_length(&self) -> f64 {
        self.vertices.windows(2).map(|w| w[0].xy_dist(&w[1])).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ExtrusionMode {
    #[default]
    Absolute,
    Relative,
}

/// State change carried by a non-motion line that the emitter must replay.
#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    None,
    /// `G92`
    SetPosition { x: Option<f64>, y: Option<f64>, z: Option<f64>, e: Option<f64> },
    /// `G28`; axes listed, or all when empty.
    Home { x: bool, y: bool, z: bool },
    ExtrusionMode(ExtrusionMode),
    RelativePositioning(bool),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawLine {
    pub text: String,
    pub effect: Effect,
}

/// A `G0`/`G1` that is not part of a deposition path: travels, retractions,
/// extruder-only moves, feed-only lines.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionLine {
    pub text: String,
    pub rapid: bool,
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub z: Option<f64>,
    /// Word value as written (absolute or relative per the active mode).
    pub e: Option<f64>,
    /// mm/s
    pub f: Option<f64>,
    /// Filament length moved by this line, mm.
    pub e_rel: f64,
    /// Byte span of the `E` word value inside `text`.
    pub e_span: Option<(usize, usize)>,
}

impl MotionLine {
    /// Synthesized travel to an absolute position.
    pub fn travel(x: Option<f64>, y: Option<f64>, z: Option<f64>) -> Self {
        let mut text = String::from("G0");
        for (c, v) in [('X', x), ('Y', y), ('Z', z)] {
            if let Some(v) = v {
                text.push(' ');
                text.push(c);
                text.push_str(&fmt_num(v));
            }
        }
        MotionLine { text, rapid: true, x, y, z, e: None, f: None, e_rel: 0.0, e_span: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Item {
    Raw(RawLine),
    Motion(MotionLine),
    /// Index into the owning layer's `paths`.
    Path(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub base_z: f64,
    pub items: Vec<Item>,
    pub paths: Vec<Toolpath>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrintProgram {
    pub prologue: Vec<Item>,
    pub layers: Vec<Layer>,
    pub epilogue: Vec<Item>,
    /// Mode in effect at the first deposition move.
    pub extrusion_mode: ExtrusionMode,
    pub crlf: bool,
    pub final_newline: bool,
}

impl PrintProgram {
    pub fn paths(&self) -> impl Iterator<Item = &Toolpath> {
        self.layers.iter().flat_map(|l| l.paths.iter())
    }

    pub fn paths_mut(&mut self) -> impl Iterator<Item = &mut Toolpath> {
        self.layers.iter_mut().flat_map(|l| l.paths.iter_mut())
    }

    pub fn vertex_count(&self) -> usize {
        self.paths().map(|p| p.len()).sum()
    }

    /// Filament extruded along paths plus net filament of all other moves.
    pub fn total_e(&self) -> f64 {
        let items = self.prologue.iter().chain(self.layers.iter().flat_map(|l| l.items.iter())).chain(self.epilogue.iter());
        let moves: f64 = items
            .map(|it| match it {
                Item::Motion(m) => m.e_rel,
                _ => 0.0,
            })
            .sum();
        moves + self.paths().map(|p| p.total_e()).sum::<f64>()
    }

    pub fn deposited_e(&self) -> f64 {
        self.paths().map(|p| p.total_e()).sum()
    }
}

/// Fixed five-decimal formatting used for every generated number.
pub fn fmt_num(v: f64) -> String {
    let s = format!("{v:.5}");
    if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
        s[1..].to_string()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_from_tags() {
        assert_eq!(PathKind::from_tag("FILL"), PathKind::Infill);
        assert_eq!(PathKind::from_tag("WALL-OUTER"), PathKind::Perimeter);
        assert_eq!(PathKind::from_tag("PERIMETER"), PathKind::Perimeter);
        assert_eq!(PathKind::from_tag("SUPPORT"), PathKind::Unknown);
    }

    #[test]
    fn number_format() {
        assert_eq!(fmt_num(0.8), "0.80000");
        assert_eq!(fmt_num(-0.000001), "0.00000");
        assert_eq!(fmt_num(-1.5), "-1.50000");
    }
}
