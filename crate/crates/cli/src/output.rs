//! Trajectory CSV and JSON writers. Every float is written with 17
//! significant digits so files round-trip exactly.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use constrained_dynamics::Trajectory;
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

/// `{:.16e}`, or `nan` / `inf` / `-inf` for non-finite values.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Pretty printer that writes floats in scientific notation with 17
/// significant digits. Non-finite floats become `null` before reaching it.
struct Sig17(PrettyFormatter<'static>);

impl Formatter for Sig17 {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(format!("{value:.16e}").as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, f64::from(value))
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> io::Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17(PrettyFormatter::new()));
    value.serialize(&mut ser).map_err(io::Error::other)?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(io::Error::other)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    create_parent(path)?;
    std::fs::write(path, to_json(value)?)
}

fn create_parent(path: &Path) -> io::Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p),
        _ => Ok(()),
    }
}

/// `t,x1..xn,v1..vn,phi_1..phi_m`, then observer columns.
pub fn csv_header(dim_x: usize, dim_y: usize, observers: &[String]) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=dim_x).map(|i| format!("x{i}")));
    cols.extend((1..=dim_x).map(|i| format!("v{i}")));
    cols.extend((1..=dim_y).map(|i| format!("phi_{i}")));
    cols.extend(observers.iter().cloned());
    cols.join(",")
}

/// Header-only file, for runs that fail before the first sample.
pub fn write_csv_header(path: &Path, header: &str) -> io::Result<()> {
    create_parent(path)?;
    std::fs::write(path, format!("{header}\n"))
}

pub fn write_csv(path: &Path, traj: &Trajectory, dim_x: usize, dim_y: usize) -> io::Result<()> {
    create_parent(path)?;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", csv_header(dim_x, dim_y, &traj.invariant_names))?;
    let mut row = String::new();
    for s in &traj.samples {
        row.clear();
        row.push_str(&fmt_f64(s.point.t));
        let values = s
            .point
            .x
            .iter()
            .chain(s.point.v.iter())
            .chain(s.constraint.iter())
            .chain(s.invariants.iter());
        for x in values {
            row.push(',');
            row.push_str(&fmt_f64(*x));
        }
        writeln!(w, "{row}")?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, std::f64::consts::PI] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
        assert_eq!(fmt_f64(f64::NAN), "nan");
    }

    #[test]
    fn json_numbers() {
        #[derive(Serialize)]
        struct S {
            a: f64,
            b: f64,
            c: u32,
        }
        let s = to_json(&S {
            a: 0.1,
            b: f64::NAN,
            c: 7,
        })
        .unwrap();
        assert!(s.contains("\"a\": 1.0000000000000001e-1"), "{s}");
        assert!(s.contains("\"b\": null"));
        assert!(s.contains("\"c\": 7"));
        let back: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["a"].as_f64(), Some(0.1));
    }

    #[test]
    fn header_layout() {
        assert_eq!(
            csv_header(3, 1, &["kinetic-energy".into()]),
            "t,x1,x2,x3,v1,v2,v3,phi_1,kinetic-energy"
        );
    }
}
