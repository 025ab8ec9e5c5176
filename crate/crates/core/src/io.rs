//! PAFT binary tensors, plus the scene and parse-result text formats.
//! Layouts are documented in `FORMATS.md`.

use std::fmt::Write as _;
use std::path::Path;

use crate::assembly::{ParseResult, PersonPose};
use crate::detection::PartCandidate;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::grid::{ScalarGrid, VectorGrid};
use crate::scene::Scene;

pub const PAFT_MAGIC: [u8; 4] = *b"PAFT";
pub const PAFT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;
/// Upper bound on the f32 elements a header may declare.
pub const MAX_ELEMENTS: u64 = 1 << 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldFileHeader {
    pub width: u32,
    pub height: u32,
    pub num_maps: u32,
    pub num_fields: u32,
}

impl FieldFileHeader {
    /// Total f32 values in the payload.
    pub fn elements(&self) -> u64 {
        (self.num_maps as u64 + 2 * self.num_fields as u64) * self.width as u64 * self.height as u64
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Header(format!(
                "dimensions must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        if self.elements() > MAX_ELEMENTS {
            return Err(Error::Header(format!(
                "{} elements exceed the limit of {MAX_ELEMENTS}",
                self.elements()
            )));
        }
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if available < n {
            return Err(Error::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// One plane of `n` finite floats; `base` is the element index of its
    /// first value for error reporting.
    fn plane(&mut self, n: usize, base: usize) -> Result<Vec<f32>> {
        let raw = self.take(n * 4)?;
        raw.chunks_exact(4)
            .enumerate()
            .map(|(i, c)| {
                let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonFinite(base + i))
                }
            })
            .collect()
    }
}

pub fn decode_header(bytes: &[u8]) -> Result<FieldFileHeader> {
    let mut r = Reader { bytes, pos: 0 };
    read_header(&mut r)
}

fn read_header(r: &mut Reader<'_>) -> Result<FieldFileHeader> {
    let magic = r.take(4)?;
    if magic != PAFT_MAGIC {
        return Err(Error::BadMagic {
            found: [magic[0], magic[1], magic[2], magic[3]],
        });
    }
    let version = r.u32()?;
    if version != PAFT_VERSION {
        return Err(Error::Version(version));
    }
    let header = FieldFileHeader {
        width: r.u32()?,
        height: r.u32()?,
        num_maps: r.u32()?,
        num_fields: r.u32()?,
    };
    header.validate()?;
    Ok(header)
}

/// Serializes maps then fields (x plane, then y plane, per field).
pub fn encode_fields(maps: &[ScalarGrid], fields: &[VectorGrid]) -> Result<Vec<u8>> {
    let dims = maps
        .first()
        .map(ScalarGrid::dims)
        .or_else(|| fields.first().map(VectorGrid::dims))
        .ok_or_else(|| Error::Header("at least one channel is needed to fix the dimensions".into()))?;
    crate::grid::check_dims(maps, dims, "map")?;
    crate::grid::check_dims(fields, dims, "field")?;
    let narrow = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::Header(format!("{what} {v} does not fit in 32 bits")))
    };
    let header = FieldFileHeader {
        width: narrow(dims.0, "width")?,
        height: narrow(dims.1, "height")?,
        num_maps: narrow(maps.len(), "map count")?,
        num_fields: narrow(fields.len(), "field count")?,
    };
    header.validate()?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * header.elements() as usize);
    out.extend_from_slice(&PAFT_MAGIC);
    for v in [PAFT_VERSION, header.width, header.height, header.num_maps, header.num_fields] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for m in maps {
        for v in m.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for f in fields {
        for axis in 0..2 {
            for v in f.values() {
                out.extend_from_slice(&v[axis].to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn decode_fields(bytes: &[u8]) -> Result<(Vec<ScalarGrid>, Vec<VectorGrid>)> {
    let mut r = Reader { bytes, pos: 0 };
    let h = read_header(&mut r)?;
    let (w, ht) = (h.width as usize, h.height as usize);
    let plane = w * ht;
    let payload = 4 * h.elements() as usize;
    let available = bytes.len() - r.pos;
    if available > payload {
        return Err(Error::TrailingBytes {
            trailing: available - payload,
        });
    }
    let mut element = 0;
    // Channel vectors grow as planes are read, so a lying header cannot
    // force a large allocation.
    let mut maps = Vec::new();
    for _ in 0..h.num_maps {
        maps.push(ScalarGrid::from_vec(w, ht, r.plane(plane, element)?)?);
        element += plane;
    }
    let mut fields = Vec::new();
    for _ in 0..h.num_fields {
        let xs = r.plane(plane, element)?;
        let ys = r.plane(plane, element + plane)?;
        element += 2 * plane;
        fields.push(VectorGrid::from_vec(
            w,
            ht,
            xs.into_iter().zip(ys).map(|(x, y)| [x, y]).collect(),
        )?);
    }
    Ok((maps, fields))
}

pub fn write_fields(path: impl AsRef<Path>, maps: &[ScalarGrid], fields: &[VectorGrid]) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_fields(maps, fields)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_fields(path: impl AsRef<Path>) -> Result<(Vec<ScalarGrid>, Vec<VectorGrid>)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_fields(&bytes)
}

/// Numbered non-empty lines, skipping `#` comments.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn field<T: std::str::FromStr>(line: usize, s: &str, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::syntax(line, format!("invalid {what} `{s}`")))
}

fn coord(line: usize, s: &str) -> Result<f64> {
    let v: f64 = field(line, s, "coordinate")?;
    if !v.is_finite() {
        return Err(Error::syntax(line, format!("non-finite coordinate `{s}`")));
    }
    Ok(v)
}

fn part_index(line: usize, s: &str, expected: usize) -> Result<()> {
    let j: usize = field(line, s, "part index")?;
    if j != expected {
        return Err(Error::syntax(line, format!("expected part {expected}, found {j}")));
    }
    Ok(())
}

pub fn scene_to_string(scene: &Scene) -> String {
    let mut out = format!("scene {} {} {}\n", scene.width, scene.height, scene.num_persons());
    for (k, person) in scene.persons.iter().enumerate() {
        let _ = writeln!(out, "person {k}");
        for (j, kp) in person.iter().enumerate() {
            match kp {
                Some(p) => {
                    let _ = writeln!(out, "{j} {:.3} {:.3}", p.x, p.y);
                }
                None => {
                    let _ = writeln!(out, "{j} -");
                }
            }
        }
    }
    out
}

/// Groups lines under each `person ...` header line.
/// A `person` header line and the part lines under it, with line numbers.
type PersonBlock<'a> = ((usize, &'a str), Vec<(usize, &'a str)>);

fn person_blocks<'a>(
    lines: impl Iterator<Item = (usize, &'a str)>,
) -> Result<Vec<PersonBlock<'a>>> {
    let mut blocks: Vec<PersonBlock> = Vec::new();
    for (ln, line) in lines {
        if line.starts_with("person") {
            blocks.push(((ln, line), Vec::new()));
        } else {
            match blocks.last_mut() {
                Some((_, body)) => body.push((ln, line)),
                None => return Err(Error::syntax(ln, format!("expected `person`, found `{line}`"))),
            }
        }
    }
    Ok(blocks)
}

fn check_block_len(header_line: usize, body: &[(usize, &str)], num_parts: usize) -> Result<()> {
    if body.len() != num_parts {
        return Err(Error::syntax(
            header_line,
            format!("person lists {} parts, topology has {num_parts}", body.len()),
        ));
    }
    Ok(())
}

/// Parses the scene text format for a topology with `num_parts` parts.
pub fn scene_from_str(text: &str, num_parts: usize) -> Result<Scene> {
    let mut lines = content_lines(text);
    let (ln, header) = lines
        .next()
        .ok_or_else(|| Error::syntax(1, "empty input, expected `scene <w> <h> <K>`"))?;
    let f: Vec<&str> = header.split_whitespace().collect();
    let ["scene", w, h, k] = f[..] else {
        return Err(Error::syntax(ln, "expected `scene <width> <height> <K>`"));
    };
    let (width, height, count): (usize, usize, usize) =
        (field(ln, w, "width")?, field(ln, h, "height")?, field(ln, k, "person count")?);

    let blocks = person_blocks(lines)?;
    if blocks.len() != count {
        return Err(Error::syntax(ln, format!("header declares {count} persons, found {}", blocks.len())));
    }
    let mut persons = Vec::with_capacity(count);
    for (k, ((hl, header), body)) in blocks.into_iter().enumerate() {
        let f: Vec<&str> = header.split_whitespace().collect();
        match f[..] {
            ["person", idx] if field::<usize>(hl, idx, "person index")? == k => {}
            _ => return Err(Error::syntax(hl, format!("expected `person {k}`"))),
        }
        check_block_len(hl, &body, num_parts)?;
        let mut person = Vec::with_capacity(num_parts);
        for (j, (pl, line)) in body.into_iter().enumerate() {
            let f: Vec<&str> = line.split_whitespace().collect();
            match f[..] {
                [p, "-"] => {
                    part_index(pl, p, j)?;
                    person.push(None);
                }
                [p, x, y] => {
                    part_index(pl, p, j)?;
                    person.push(Some(Point::new(coord(pl, x)?, coord(pl, y)?)));
                }
                _ => return Err(Error::syntax(pl, "expected `<part> <x> <y>` or `<part> -`")),
            }
        }
        persons.push(person);
    }
    Scene::new(width, height, num_parts, persons)
}

pub fn write_scene(path: impl AsRef<Path>, scene: &Scene) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, scene_to_string(scene)).map_err(|e| Error::io(path, e))
}

pub fn read_scene(path: impl AsRef<Path>, num_parts: usize) -> Result<Scene> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    scene_from_str(&text, num_parts)
}

pub fn parse_result_to_string(result: &ParseResult) -> String {
    let mut out = format!("# total_score {:.6}\n", result.total_score);
    for person in &result.persons {
        let _ = writeln!(out, "person {:.6} {}", person.score, person.num_parts);
        for (j, c) in person.parts.iter().enumerate() {
            match c {
                Some(c) => {
                    let _ = writeln!(out, "{j} {:.3} {:.3} {:.6}", c.position.x, c.position.y, c.score);
                }
                None => {
                    let _ = writeln!(out, "{j} - - -");
                }
            }
        }
    }
    out
}

/// Parses the parse-result text format. Candidate ids are renumbered per
/// part in order of appearance.
pub fn parse_result_from_str(text: &str, num_parts: usize) -> Result<ParseResult> {
    let total_score = text
        .lines()
        .find_map(|l| l.trim().strip_prefix("# total_score"))
        .map(|v| v.trim().parse::<f64>().unwrap_or(0.0))
        .unwrap_or(0.0);
    let mut next_id = vec![0usize; num_parts];
    let mut persons = Vec::new();
    for ((hl, header), body) in person_blocks(content_lines(text))? {
        let f: Vec<&str> = header.split_whitespace().collect();
        let ["person", score, count] = f[..] else {
            return Err(Error::syntax(hl, "expected `person <score> <num_parts>`"));
        };
        let score: f64 = field(hl, score, "score")?;
        let count: usize = field(hl, count, "part count")?;
        check_block_len(hl, &body, num_parts)?;
        let mut parts = Vec::with_capacity(num_parts);
        for (j, (pl, line)) in body.into_iter().enumerate() {
            let f: Vec<&str> = line.split_whitespace().collect();
            match f[..] {
                [p, "-", "-", "-"] => {
                    part_index(pl, p, j)?;
                    parts.push(None);
                }
                [p, x, y, conf] => {
                    part_index(pl, p, j)?;
                    parts.push(Some(PartCandidate {
                        part: j,
                        id: next_id[j],
                        position: Point::new(coord(pl, x)?, coord(pl, y)?),
                        score: field(pl, conf, "confidence")?,
                    }));
                    next_id[j] += 1;
                }
                _ => return Err(Error::syntax(pl, "expected `<part> <x> <y> <conf>` or `<part> - - -`")),
            }
        }
        let pose = PersonPose::new(parts, score);
        if pose.num_parts != count {
            return Err(Error::syntax(
                hl,
                format!("declares {count} parts but lists {}", pose.num_parts),
            ));
        }
        persons.push(pose);
    }
    Ok(ParseResult { persons, total_score })
}

pub fn write_parse_result(path: impl AsRef<Path>, result: &ParseResult) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, parse_result_to_string(result)).map_err(|e| Error::io(path, e))
}

pub fn read_parse_result(path: impl AsRef<Path>, num_parts: usize) -> Result<ParseResult> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_result_from_str(&text, num_parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (Vec<ScalarGrid>, Vec<VectorGrid>) {
        let m = ScalarGrid::from_vec(3, 2, vec![0.0, 1.0, 0.5, -0.0, 1e-30, 0.25]).unwrap();
        let f = VectorGrid::from_vec(3, 2, (0..6).map(|i| [i as f32, -(i as f32)]).collect()).unwrap();
        (vec![m], vec![f])
    }

    #[test]
    fn paft_round_trip_and_layout() {
        let (maps, fields) = sample();
        let bytes = encode_fields(&maps, &fields).unwrap();
        assert_eq!(&bytes[..4], b"PAFT");
        assert_eq!(bytes.len(), HEADER_LEN + 4 * (6 + 12));
        // First field's y plane starts after the map plane and the x plane.
        let y0 = HEADER_LEN + 4 * 12;
        assert_eq!(f32::from_le_bytes(bytes[y0 + 4..y0 + 8].try_into().unwrap()), -1.0);
        let (m2, f2) = decode_fields(&bytes).unwrap();
        assert_eq!(m2.len(), 1);
        for (a, b) in maps[0].values().iter().zip(m2[0].values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(fields, f2);
    }

    #[test]
    fn paft_errors() {
        let (maps, fields) = sample();
        let bytes = encode_fields(&maps, &fields).unwrap();
        assert!(matches!(
            decode_fields(&bytes[..bytes.len() - 3]),
            Err(Error::Truncated { offset: 72, needed: 24, available: 21 })
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_fields(&bad), Err(Error::BadMagic { .. })));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(decode_fields(&bad), Err(Error::Version(2))));
        let mut bad = bytes.clone();
        bad[8..12].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(decode_fields(&bad), Err(Error::Header(_))));
        let mut bad = bytes.clone();
        bad[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(decode_fields(&bad), Err(Error::Header(_))));
        let mut bad = bytes.clone();
        bad.push(0);
        assert!(matches!(decode_fields(&bad), Err(Error::TrailingBytes { trailing: 1 })));
        let mut bad = bytes.clone();
        bad[HEADER_LEN..HEADER_LEN + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode_fields(&bad), Err(Error::NonFinite(0))));
        assert!(encode_fields(&[], &[]).is_err());
    }

    #[test]
    fn scene_text_round_trip() {
        let s = Scene::new(
            100,
            80,
            3,
            vec![
                vec![Some(Point::new(1.23456, 2.0)), None, Some(Point::new(99.0, 79.5))],
                vec![None, None, None],
            ],
        )
        .unwrap();
        let text = scene_to_string(&s);
        assert!(text.starts_with("scene 100 80 2\nperson 0\n0 1.235 2.000\n1 -\n"));
        let back = scene_from_str(&text, 3).unwrap();
        assert_eq!(back.persons[0][1], None);
        assert!((back.persons[0][0].unwrap().x - 1.23456).abs() <= 5e-4);
        assert!(matches!(scene_from_str(&text, 4), Err(Error::Syntax { line: 2, .. })));
        let broken = text.replace("0 1.235 2.000", "0 1.235 abc");
        assert!(matches!(scene_from_str(&broken, 3), Err(Error::Syntax { line: 3, .. })));
    }

    #[test]
    fn parse_result_text_round_trip() {
        let c = |part, x, y, score| {
            Some(PartCandidate {
                part,
                id: 0,
                position: Point::new(x, y),
                score,
            })
        };
        let r = ParseResult {
            persons: vec![
                PersonPose::new(vec![c(0, 1.0, 2.0, 0.9), None], 2.5),
                PersonPose::new(vec![c(0, 5.0, 6.0, 0.8), c(1, 7.0, 8.0, 0.7)], 1.5),
            ],
            total_score: 1.25,
        };
        let back = parse_result_from_str(&parse_result_to_string(&r), 2).unwrap();
        assert_eq!(back.total_score, 1.25);
        assert_eq!(back.persons.len(), 2);
        assert_eq!(back.persons[1].parts[0].unwrap().id, 1);
        assert_eq!(back.persons[1].num_parts, 2);
        assert!(parse_result_from_str("person 1.0 1\n0 - - -\n", 1).is_err());
        assert_eq!(parse_result_from_str("", 4).unwrap().persons.len(), 0);
    }
}
