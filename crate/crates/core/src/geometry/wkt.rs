use super::{Coord, Geometry, GeometryError, Polygon};
use crate::scalar::Scalar;

const SUPPORTED: [&str; 4] = ["POINT", "LINESTRING", "POLYGON", "MULTIPOLYGON"];
const KNOWN_UNSUPPORTED: [&str; 5] = [
    "MULTIPOINT",
    "MULTILINESTRING",
    "GEOMETRYCOLLECTION",
    "CIRCULARSTRING",
    "TRIANGLE",
];

/// Parses OGC Simple Features WKT for points, linestrings, polygons and multipolygons.
pub fn parse_wkt<T: Scalar>(text: &str) -> Result<Geometry<T>, GeometryError> {
    let mut p = Parser { src: text, pos: 0 };
    p.skip_ws();
    let tag_start = p.pos;
    let tag = p.word().to_ascii_uppercase();
    if tag.is_empty() {
        return Err(p.err("expected geometry tag"));
    }
    if !SUPPORTED.contains(&tag.as_str()) {
        if KNOWN_UNSUPPORTED.contains(&tag.as_str()) {
            return Err(GeometryError::UnsupportedKind(tag));
        }
        return Err(GeometryError::MalformedWkt {
            position: tag_start,
            reason: format!("unknown geometry tag `{tag}`"),
        });
    }
    p.skip_ws();
    let modifier_at = p.pos;
    let modifier = p.word().to_ascii_uppercase();
    match modifier.as_str() {
        "" => {}
        "Z" | "M" | "ZM" => return Err(GeometryError::UnsupportedKind(format!("{tag} {modifier}"))),
        "EMPTY" => {
            return Err(GeometryError::MalformedWkt {
                position: modifier_at,
                reason: "empty geometries are not supported".into(),
            })
        }
        other => {
            return Err(GeometryError::MalformedWkt {
                position: modifier_at,
                reason: format!("unexpected token `{other}`"),
            })
        }
    }
    let geom = match tag.as_str() {
        "POINT" => {
            p.expect('(')?;
            let c = p.coord()?;
            p.expect(')')?;
            Geometry::Point(c)
        }
        "LINESTRING" => {
            let at = p.pos;
            let cs = p.coord_list()?;
            if cs.len() < 2 {
                return Err(GeometryError::MalformedWkt {
                    position: at,
                    reason: "linestring needs at least two vertices".into(),
                });
            }
            Geometry::LineString(cs)
        }
        "POLYGON" => Geometry::Polygon(p.polygon()?),
        _ => {
            p.expect('(')?;
            let mut polys = vec![p.polygon()?];
            while p.eat(',') {
                polys.push(p.polygon()?);
            }
            p.expect(')')?;
            Geometry::MultiPolygon(polys)
        }
    };
    p.skip_ws();
    if p.pos != text.len() {
        return Err(p.err("trailing characters after geometry"));
    }
    geom.validate()?;
    Ok(geom)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, reason: &str) -> GeometryError {
        GeometryError::MalformedWkt {
            position: self.pos,
            reason: reason.to_string(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn word(&mut self) -> &'a str {
        let rest = self.rest();
        let n = rest
            .find(|c: char| !c.is_ascii_alphabetic())
            .unwrap_or(rest.len());
        self.pos += n;
        &rest[..n]
    }

    fn eat(&mut self, ch: char) -> bool {
        self.skip_ws();
        if self.rest().starts_with(ch) {
            self.pos += ch.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, ch: char) -> Result<(), GeometryError> {
        if self.eat(ch) {
            Ok(())
        } else {
            Err(self.err(&format!("expected `{ch}`")))
        }
    }

    fn number<T: Scalar>(&mut self) -> Result<T, GeometryError> {
        self.skip_ws();
        let rest = self.rest();
        let n = rest
            .find(|c: char| !(c.is_ascii_digit() || matches!(c, '-' | '+' | '.' | 'e' | 'E')))
            .unwrap_or(rest.len());
        let token = &rest[..n];
        let value = token
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.err(&format!("invalid number `{token}`")))?;
        self.pos += n;
        Ok(T::lit(value))
    }

    fn coord<T: Scalar>(&mut self) -> Result<Coord<T>, GeometryError> {
        let lon = self.number()?;
        let lat = self.number()?;
        self.skip_ws();
        if self.rest().starts_with(|c: char| c.is_ascii_digit() || c == '-') {
            return Err(GeometryError::UnsupportedKind("3D coordinates".into()));
        }
        Ok(Coord::new(lon, lat))
    }

    fn coord_list<T: Scalar>(&mut self) -> Result<Vec<Coord<T>>, GeometryError> {
        self.expect('(')?;
        let mut cs = vec![self.coord()?];
        while self.eat(',') {
            cs.push(self.coord()?);
        }
        self.expect(')')?;
        Ok(cs)
    }

    fn ring<T: Scalar>(&mut self) -> Result<Vec<Coord<T>>, GeometryError> {
        self.skip_ws();
        let at = self.pos;
        let ring = self.coord_list()?;
        if ring.first() != ring.last() {
            return Err(GeometryError::MalformedWkt {
                position: at,
                reason: "ring not closed".into(),
            });
        }
        if ring.len() < 4 {
            return Err(GeometryError::MalformedWkt {
                position: at,
                reason: "ring needs at least four coordinates".into(),
            });
        }
        Ok(ring)
    }

    fn polygon<T: Scalar>(&mut self) -> Result<Polygon<T>, GeometryError> {
        self.expect('(')?;
        let exterior = self.ring()?;
        let mut interiors = Vec::new();
        while self.eat(',') {
            interiors.push(self.ring()?);
        }
        self.expect(')')?;
        Ok(Polygon::new(exterior, interiors))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_point_literal() {
        let g: Geometry<f64> = parse_wkt("POINT (11.57 48.14)").unwrap();
        assert_eq!(g, Geometry::point(11.57, 48.14));
    }

    #[test]
    fn parses_unit_square() {
        let g: Geometry<f64> = parse_wkt("POLYGON ((0 0, 0 1, 1 1, 1 0, 0 0))").unwrap();
        let Geometry::Polygon(p) = &g else { panic!("not a polygon") };
        assert_eq!(p.exterior.len(), 5);
        assert_eq!(p.exterior.first(), p.exterior.last());
        assert_eq!(g.to_wkt(), "POLYGON ((0 0, 0 1, 1 1, 1 0, 0 0))");
    }

    #[test]
    fn open_ring_is_malformed() {
        let err = parse_wkt::<f64>("POLYGON ((0 0, 1 1))").unwrap_err();
        match err {
            GeometryError::MalformedWkt { reason, position } => {
                assert_eq!(reason, "ring not closed");
                assert_eq!(position, 9);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_unsupported_kinds() {
        assert_eq!(
            parse_wkt::<f64>("MULTIPOINT ((1 2), (3 4))").unwrap_err(),
            GeometryError::UnsupportedKind("MULTIPOINT".into())
        );
        assert!(matches!(
            parse_wkt::<f64>("POINT Z (1 2 3)").unwrap_err(),
            GeometryError::UnsupportedKind(_)
        ));
        assert!(matches!(
            parse_wkt::<f64>("POINT (1 2 3)").unwrap_err(),
            GeometryError::UnsupportedKind(_)
        ));
    }

    #[test]
    fn rejects_garbage() {
        for bad in ["", "POINT", "POINT (1)", "POINT (1 2", "POINT (1 2) x", "FOO (1 2)", "LINESTRING (1 2)"] {
            assert!(parse_wkt::<f64>(bad).is_err(), "{bad:?} accepted");
        }
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(matches!(
            parse_wkt::<f64>("POINT (181 0)").unwrap_err(),
            GeometryError::OutOfRange { .. }
        ));
        assert!(parse_wkt::<f64>("POINT (0 -90.5)").is_err());
    }

    #[test]
    fn multipolygon_with_hole() {
        let wkt = "MULTIPOLYGON (((0 0, 4 0, 4 4, 0 4, 0 0), (1 1, 2 1, 2 2, 1 2, 1 1)), ((10 10, 11 10, 11 11, 10 10)))";
        let g: Geometry<f64> = parse_wkt(wkt).unwrap();
        assert_eq!(g.polygons().len(), 2);
        assert_eq!(g.polygons()[0].interiors.len(), 1);
        assert_eq!(g.to_wkt(), wkt);
    }

    #[test]
    fn lowercase_and_exponents() {
        let g: Geometry<f32> = parse_wkt("linestring(1e-1 2, 3.5 -4E0)").unwrap();
        assert_eq!(g, Geometry::LineString(vec![Coord::new(0.1, 2.0), Coord::new(3.5, -4.0)]));
    }
}
