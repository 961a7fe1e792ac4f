use std::fmt::Write as _;

use super::{LoadReport, MeshError, Point, TriangleMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StlFormat {
    Ascii,
    Binary,
}

/// Binary if the facet count in the header matches the byte length exactly,
/// otherwise ASCII when the file opens with `solid`.
pub fn detect_format(bytes: &[u8]) -> StlFormat {
    if bytes.len() >= 84 {
        let n = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
        if n.checked_mul(50).and_then(|b| b.checked_add(84)) == Some(bytes.len()) {
            return StlFormat::Binary;
        }
    }
    let head = bytes.iter().skip_while(|b| b.is_ascii_whitespace()).take(5).copied().collect::<Vec<_>>();
    if head.eq_ignore_ascii_case(b"solid") {
        StlFormat::Ascii
    } else {
        StlFormat::Binary
    }
}

pub fn load_mesh(bytes: &[u8], format: Option<StlFormat>) -> Result<(TriangleMesh, LoadReport), MeshError> {
    let facets = match format.unwrap_or_else(|| detect_format(bytes)) {
        StlFormat::Binary => parse_binary(bytes)?,
        StlFormat::Ascii => parse_ascii(bytes)?,
    };
    TriangleMesh::from_triangles(facets)
}

fn perr(offset: usize, message: impl Into<String>) -> MeshError {
    MeshError::Parse { offset, message: message.into() }
}

fn parse_binary(bytes: &[u8]) -> Result<Vec<[Point; 3]>, MeshError> {
    if bytes.len() < 84 {
        return Err(perr(bytes.len(), "truncated binary header"));
    }
    let n = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
    let f = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as f64;
    let mut out = Vec::with_capacity(n.min(bytes.len() / 50));
    for k in 0..n {
        let base = 84 + 50 * k;
        if base + 50 > bytes.len() {
            return Err(perr(base, format!("truncated facet {k} of {n}")));
        }
        // the stored normal is ignored; winding is authoritative
        let v = |i: usize| {
            let o = base + 12 + 12 * i;
            Point::new(f(o), f(o + 4), f(o + 8))
        };
        out.push([v(0), v(1), v(2)]);
    }
    Ok(out)
}

struct Tokens<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn next(&mut self) -> Option<(usize, &'a str)> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if self.pos >= self.src.len() {
            return None;
        }
        let start = self.pos;
        while self.pos < self.src.len() && !self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        Some((start, std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("\u{fffd}")))
    }

    fn skip_line(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos] != b'\n' {
            self.pos += 1;
        }
    }

    fn expect(&mut self, word: &str) -> Result<(), MeshError> {
        match self.next() {
            Some((_, t)) if t.eq_ignore_ascii_case(word) => Ok(()),
            Some((o, t)) => Err(perr(o, format!("expected '{word}', found '{t}'"))),
            None => Err(perr(self.src.len(), format!("expected '{word}', found end of file"))),
        }
    }

    fn number(&mut self) -> Result<f64, MeshError> {
        match self.next() {
            Some((o, t)) => t.parse::<f64>().map_err(|_| perr(o, format!("invalid number '{t}'"))),
            None => Err(perr(self.src.len(), "expected number, found end of file")),
        }
    }
}

fn parse_ascii(bytes: &[u8]) -> Result<Vec<[Point; 3]>, MeshError> {
    let mut tk = Tokens { src: bytes, pos: 0 };
    let mut out = Vec::new();
    let mut solids = 0;
    loop {
        match tk.next() {
            None if solids > 0 => return Ok(out),
            None => return Err(perr(0, "empty ASCII STL")),
            Some((_, t)) if t.eq_ignore_ascii_case("solid") => {
                solids += 1;
                // the solid name runs to the end of the line
                tk.skip_line();
            }
            Some((o, t)) => return Err(perr(o, format!("expected 'solid', found '{t}'"))),
        }
        loop {
            match tk.next() {
                Some((_, t)) if t.eq_ignore_ascii_case("endsolid") => {
                    tk.skip_line();
                    break;
                }
                Some((_, t)) if t.eq_ignore_ascii_case("facet") => {
                    tk.expect("normal")?;
                    for _ in 0..3 {
                        tk.number()?;
                    }
                    tk.expect("outer")?;
                    tk.expect("loop")?;
                    let mut tri = [Point::origin(); 3];
                    for v in tri.iter_mut() {
                        tk.expect("vertex")?;
                        *v = Point::new(tk.number()?, tk.number()?, tk.number()?);
                    }
                    tk.expect("endloop")?;
                    tk.expect("endfacet")?;
                    out.push(tri);
                }
                Some((o, t)) => return Err(perr(o, format!("expected 'facet' or 'endsolid', found '{t}'"))),
                None => return Err(perr(bytes.len(), "missing 'endsolid'")),
            }
        }
    }
}

pub fn write_stl_binary(mesh: &TriangleMesh) -> Vec<u8> {
    let mut out = vec![0u8; 80];
    out[..14].copy_from_slice(b"aa binary mesh");
    out.extend_from_slice(&(mesh.len() as u32).to_le_bytes());
    for t in 0..mesh.len() {
        let n = mesh.normals()[t];
        for c in [n.x, n.y, n.z] {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
        for p in mesh.triangle(t) {
            for c in [p.x, p.y, p.z] {
                out.extend_from_slice(&(c as f32).to_le_bytes());
            }
        }
        out.extend_from_slice(&[0, 0]);
    }
    out
}

pub fn write_stl_ascii(mesh: &TriangleMesh, name: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "solid {name}");
    for t in 0..mesh.len() {
        let n = mesh.normals()[t];
        let _ = writeln!(s, "  facet normal {:e} {:e} {:e}", n.x, n.y, n.z);
        s.push_str("    outer loop\n");
        for p in mesh.triangle(t) {
            let _ = writeln!(s, "      vertex {:?} {:?} {:?}", p.x, p.y, p.z);
        }
        s.push_str("    endloop\n  endfacet\n");
    }
    let _ = writeln!(s, "endsolid {name}");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube() -> TriangleMesh {
        crate::evaluate::fixtures::box_mesh(Point::new(0., 0., 0.), Point::new(2., 3., 4.))
    }

    #[test]
    fn binary_round_trip() {
        let m = cube();
        let bytes = write_stl_binary(&m);
        assert_eq!(detect_format(&bytes), StlFormat::Binary);
        let (back, rep) = load_mesh(&bytes, None).unwrap();
        assert_eq!(back, m);
        assert_eq!(rep.facets_read, 12);
        assert!((back.volume() - 24.0).abs() < 1e-9);
        assert!(back.is_closed());
    }

    #[test]
    fn ascii_round_trip() {
        let m = cube();
        let text = write_stl_ascii(&m, "cube part");
        assert_eq!(detect_format(text.as_bytes()), StlFormat::Ascii);
        let (back, _) = load_mesh(text.as_bytes(), None).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn truncated_binary_reports_offset() {
        let bytes = write_stl_binary(&cube());
        let cut = &bytes[..84 + 50 * 3 + 10];
        let err = load_mesh(cut, Some(StlFormat::Binary)).unwrap_err();
        assert_eq!(err, MeshError::Parse { offset: 84 + 150, message: "truncated facet 3 of 12".into() });
        assert!(matches!(load_mesh(&bytes[..40], Some(StlFormat::Binary)), Err(MeshError::Parse { offset: 40, .. })));
    }

    #[test]
    fn bad_ascii_token_reports_offset() {
        let text = "solid x\nfacet normal 0 0 1\nouter loop\nvertex 0 0 zz\n";
        let err = load_mesh(text.as_bytes(), Some(StlFormat::Ascii)).unwrap_err();
        let off = text.find("zz").unwrap();
        assert!(matches!(err, MeshError::Parse { offset, .. } if offset == off));
    }
}
