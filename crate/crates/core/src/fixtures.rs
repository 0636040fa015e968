//! Offline fixtures: a seeded synthetic city, a geocoder table and scripted
//! agent transcripts.

use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::agent::{Gateway, RetryPolicy, ScriptedBackend, Transcript, TranscriptError};
use crate::engine::{Engine, EngineConfig};
use crate::region::FixtureGeocoder;
use crate::store::{IngestReport, KnowledgeStore, StoreError, TrigramEmbedder};

pub const CITY_SEED: u64 = 1_776_543;
pub const GEOCODER_JSON: &str = include_str!("../fixtures/geocoder.json");
pub const TRANSCRIPTS_JSON: &str = include_str!("../fixtures/transcripts.json");

const LON0: f64 = 11.50;
const LAT0: f64 = 48.10;
const DLON: f64 = 0.006;
const DLAT: f64 = 0.004;
const COLS: usize = 25;
const ROWS: usize = 25;

/// One GeoJSON collection and where it is ingested.
#[derive(Debug, Clone)]
pub struct CityLayer {
    pub database: &'static str,
    pub table: &'static str,
    pub collection: Value,
}

type Ring = Vec<[f64; 2]>;

fn rect(min_lon: f64, min_lat: f64, max_lon: f64, max_lat: f64) -> Value {
    let r: Ring = vec![[min_lon, min_lat], [max_lon, min_lat], [max_lon, max_lat], [min_lon, max_lat], [min_lon, min_lat]];
    json!({"type": "Polygon", "coordinates": [r]})
}

fn point(lon: f64, lat: f64) -> Value {
    json!({"type": "Point", "coordinates": [lon, lat]})
}

fn line(coords: &[[f64; 2]]) -> Value {
    json!({"type": "LineString", "coordinates": coords})
}

fn feature(id: u64, fclass: Option<&str>, name: &str, geometry: Value) -> Value {
    let mut props = serde_json::Map::new();
    props.insert("osm_id".into(), json!(id.to_string()));
    if let Some(c) = fclass {
        props.insert("fclass".into(), json!(c));
    }
    props.insert("name".into(), json!(name));
    json!({"type": "Feature", "properties": props, "geometry": geometry})
}

fn collection(features: Vec<Value>) -> Value {
    json!({"type": "FeatureCollection", "features": features})
}

const SOIL: [(&str, &str); 12] = [
    ("1", "Kalkpaternia aus Auensand"),
    ("4a", "Parabraunerde aus Lösslehm"),
    ("12", "Pararendzina aus Schotter"),
    ("22b", "Anmoorgley über Kies"),
    ("28", "Niedermoor aus Torf"),
    ("31", "Regosol aus Bauschutt"),
    ("57", "Braunerde aus Lehm"),
    ("65", "Gley aus Flusssand"),
    ("73", "Loam: rich nutrients, good drainage and moisture retention"),
    ("80a", "Rendzina aus Kalkstein"),
    ("84", "Siedlungsfläche"),
    ("85", "Pseudogley aus Schluff"),
];

const STREETS: [&str; 52] = [
    "Ludwigstraße", "Leopoldstraße", "Schellingstraße", "Gabelsbergerstraße", "Brienner Straße", "Karlstraße",
    "Dachauer Straße", "Nymphenburger Straße", "Arnulfstraße", "Landsberger Straße", "Lindwurmstraße",
    "Sonnenstraße", "Rosenheimer Straße", "Ismaninger Straße", "Prinzregentenstraße", "Maximilianstraße",
    "Zweibrückenstraße", "Sendlinger Straße", "Augustenstraße", "Türkenstraße", "Amalienstraße", "Barer Straße",
    "Arcisstraße", "Luisenstraße", "Schleißheimer Straße", "Elisabethstraße", "Hohenzollernstraße",
    "Belgradstraße", "Kurfürstenstraße", "Agnesstraße", "Heßstraße", "Lothstraße", "Infanteriestraße",
    "Winzererstraße", "Georgenstraße", "Adalbertstraße", "Kaulbachstraße", "Königinstraße", "Widenmayerstraße",
    "Steinsdorfstraße", "Baaderstraße", "Fraunhoferstraße", "Müllerstraße", "Reichenbachstraße",
    "Corneliusstraße", "Klenzestraße", "Gollierstraße", "Tulbeckstraße", "Ganghoferstraße", "Schwanthalerstraße",
    "Goethestraße", "Paul-Heyse-Straße",
];

const ROAD_CLASSES: [&str; 7] = ["primary", "secondary", "tertiary", "residential", "residential", "service", "cycleway"];

const PARK_NAMES: [&str; 14] = [
    "Finanzgarten", "Westpark", "Ostpark", "Hirschgarten", "Nußbaumpark", "Bavariapark", "Weißenseepark",
    "Petuelpark", "Sckell-Park", "Grünwalder Anger", "Josephsplatz", "Elisabethplatz", "Bordeauxplatz", "Pasinger Stadtpark",
];

const LANDUSE: [&str; 12] = [
    "residential", "residential", "commercial", "retail", "industrial", "cemetery", "allotments", "forest", "grass",
    "meadow", "recreation ground", "village green",
];

const POINT_CLASSES: [(&str, &str); 16] = [
    ("restaurant", "Gaststätte"),
    ("cafe", "Café"),
    ("kindergarten", "Kinderhaus"),
    ("school", "Grundschule"),
    ("bakery", "Bäckerei"),
    ("clothes shop", "Modehaus"),
    ("greengrocer", "Obst und Gemüse"),
    ("supermarket", "Markt"),
    ("pharmacy", "Apotheke"),
    ("bus stop", "Haltestelle"),
    ("museum", "Sammlung"),
    ("bank", "Bankfiliale"),
    ("fast food", "Imbiss"),
    ("bar", "Bar"),
    ("playground", "Spielplatz"),
    ("attraction", "Denkmal"),
];

const BUILDING_NAMES: [&str; 24] = [
    "Alte Pinakothek", "Neue Pinakothek", "Pinakothek der Moderne", "Glyptothek", "Lenbachhaus", "Staatsbibliothek",
    "Amerikahaus", "Justizpalast", "Haus der Kunst", "Hochschule für Musik", "Museum Brandhorst", "Propyläen",
    "Siegestor", "Akademie der Bildenden Künste", "Ludwigskirche", "Markuskirche", "Löwenbräukeller",
    "Augustiner-Keller", "Paulaner am Nockherberg", "Kunsthalle", "Volkstheater", "Deutsches Theater",
    "Alte Münze", "Residenz Nordflügel",
];

const PITCH_NAMES: [&str; 5] = ["Fußball", "Tennis", "Beachvolleyball", "Bolzplatz", "Hockey"];

struct Block {
    min_lon: f64,
    min_lat: f64,
    max_lon: f64,
    max_lat: f64,
}

impl Block {
    fn at(row: usize, col: usize) -> Self {
        let min_lon = LON0 + col as f64 * DLON;
        let min_lat = LAT0 + row as f64 * DLAT;
        Self { min_lon, min_lat, max_lon: min_lon + DLON, max_lat: min_lat + DLAT }
    }

    fn inset(&self, f: f64) -> Self {
        let dx = (self.max_lon - self.min_lon) * f;
        let dy = (self.max_lat - self.min_lat) * f;
        Self { min_lon: self.min_lon + dx, min_lat: self.min_lat + dy, max_lon: self.max_lon - dx, max_lat: self.max_lat - dy }
    }

    fn random_point(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        (rng.random_range(self.min_lon..self.max_lon), rng.random_range(self.min_lat..self.max_lat))
    }

    fn random_rect(&self, rng: &mut ChaCha8Rng, w: (f64, f64), h: (f64, f64)) -> Value {
        let width = rng.random_range(w.0..w.1);
        let height = rng.random_range(h.0..h.1);
        let lon = rng.random_range(self.min_lon..self.max_lon - width);
        let lat = rng.random_range(self.min_lat..self.max_lat - height);
        rect(round6(lon), round6(lat), round6(lon + width), round6(lat + height))
    }

    fn polygon(&self) -> Value {
        rect(round6(self.min_lon), round6(self.min_lat), round6(self.max_lon), round6(self.max_lat))
    }
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// Entities named in the worked examples, placed by hand.
fn curated() -> [Vec<Value>; 5] {
    let soil = Vec::new();
    let roads = vec![
        feature(24_180_336, Some("secondary"), "Theresienstraße", line(&[[11.5400, 48.1497], [11.5880, 48.1497]])),
        feature(24_180_337, Some("footway"), "Theresienweg", line(&[[11.5440, 48.1287], [11.5530, 48.1287]])),
        feature(4_404_011, Some("tertiary"), "Westendstraße", line(&[[11.5020, 48.1362], [11.5380, 48.1362]])),
        feature(4_404_012, Some("tertiary"), "Barthstraße", line(&[[11.5250, 48.1300], [11.5250, 48.1420]])),
    ];
    let points = vec![
        feature(3_412_220, Some("attraction"), "Frauenkirche", point(11.5736, 48.1386)),
        feature(3_412_221, Some("kindergarten"), "Kinderhaus am Sportpark", point(11.6012, 48.1815)),
        feature(3_412_222, Some("clothes shop"), "Modehaus Westend", point(11.5121, 48.1381)),
        feature(3_412_223, Some("clothes shop"), "Kleiderei", point(11.5262, 48.1333)),
    ];
    let area = vec![
        feature(17_978_461, Some("park"), "Salinenhof", rect(11.5785, 48.1495, 11.5800, 48.1506)),
        feature(144_135_886, Some("park"), "Maximiliansplatz", rect(11.5690, 48.1405, 11.5760, 48.1422)),
        feature(28_917_334, Some("park"), "Marsfeld", rect(11.5508, 48.1446, 11.5525, 48.1458)),
        feature(5_218_891, Some("park"), "Alter Botanischer Garten", rect(11.5640, 48.1424, 11.5675, 48.1440)),
        feature(26_592_030, Some("park"), "Hofgarten", rect(11.5790, 48.1425, 11.5830, 48.1440)),
        feature(4_069_870, Some("park"), "Luitpoldpark", rect(11.5640, 48.1640, 11.5740, 48.1700)),
        feature(4_069_871, Some("pitch"), "Basketball", rect(11.5680, 48.1660, 11.5686, 48.1664)),
        feature(23_340_880, Some("grass"), "Theresienwiese", rect(11.5440, 48.1290, 11.5530, 48.1345)),
        feature(23_340_881, Some("recreation ground"), "Sportpark Nord", rect(11.5990, 48.1800, 11.6040, 48.1830)),
    ];
    let buildings = vec![
        feature(153_292_452, None, "Krone-Villa", rect(11.5500, 48.1450, 11.5506, 48.1454)),
        feature(93_216_444, None, "Physiotherapie Kinder und Erwachsene", rect(11.5770, 48.1408, 11.5776, 48.1412)),
        feature(2_403_371, None, "Frauenkirche", rect(11.5728, 48.1382, 11.5744, 48.1390)),
    ];
    [soil, roads, points, area, buildings]
}

/// The seeded synthetic city, in table order soil, roads, points, area,
/// buildings. About 2,000 features on a 25 x 25 block grid.
pub fn synthetic_city(seed: u64) -> Vec<CityLayer> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [_, mut roads, mut points, mut area, mut buildings] = curated();

    // Soil: a 4 x 3 partition of the city.
    let mut soil = Vec::new();
    let (sw, sh) = (COLS as f64 * DLON / 4.0, ROWS as f64 * DLAT / 3.0);
    for (i, (code, text)) in SOIL.iter().enumerate() {
        let (r, c) = (i / 4, i % 4);
        let b = Block {
            min_lon: LON0 + c as f64 * sw,
            min_lat: LAT0 + r as f64 * sh,
            max_lon: LON0 + (c + 1) as f64 * sw,
            max_lat: LAT0 + (r + 1) as f64 * sh,
        };
        soil.push(feature(8_100_001 + i as u64, Some(code), text, b.polygon()));
    }

    // Streets on grid lines, five blocks per segment.
    let mut road_id = 40_000_000u64;
    let mut street_names = STREETS.iter();
    let mut grid_line = |horizontal: bool, k: usize, rng: &mut ChaCha8Rng, roads: &mut Vec<Value>| {
        let name = street_names.next().copied().unwrap_or("");
        let class = *ROAD_CLASSES.choose(rng).expect("non-empty");
        for seg in 0..5 {
            let (a, b) = (seg * 5, seg * 5 + 5);
            let coords = if horizontal {
                let lat = round6(LAT0 + k as f64 * DLAT);
                [[round6(LON0 + a as f64 * DLON), lat], [round6(LON0 + b as f64 * DLON), lat]]
            } else {
                let lon = round6(LON0 + k as f64 * DLON);
                [[lon, round6(LAT0 + a as f64 * DLAT)], [lon, round6(LAT0 + b as f64 * DLAT)]]
            };
            road_id += 1;
            roads.push(feature(road_id, Some(class), name, line(&coords)));
        }
    };
    for k in 0..=ROWS {
        grid_line(true, k, &mut rng, &mut roads);
    }
    for k in 0..=COLS {
        grid_line(false, k, &mut rng, &mut roads);
    }

    let mut area_id = 60_000_000u64;
    let mut point_id = 70_000_000u64;
    let mut building_id = 90_000_000u64;
    let mut park_names = PARK_NAMES.iter();
    let mut building_names = BUILDING_NAMES.iter();
    for row in 0..ROWS {
        for col in 0..COLS {
            let block = Block::at(row, col);
            let street = STREETS[(row * 7 + col * 3) % STREETS.len()];
            let use_roll: f64 = rng.random();
            if use_roll < 0.10 {
                area_id += 1;
                let name = if rng.random_bool(0.5) { park_names.next().copied().unwrap_or("") } else { "" };
                let park = block.inset(0.2);
                area.push(feature(area_id, Some("park"), name, park.polygon()));
                if rng.random_bool(0.4) {
                    area_id += 1;
                    let pitch_name = *PITCH_NAMES.choose(&mut rng).expect("non-empty");
                    let geom = park.inset(0.3).random_rect(&mut rng, (0.0004, 0.0008), (0.0003, 0.0005));
                    area.push(feature(area_id, Some("pitch"), pitch_name, geom));
                }
            } else if use_roll < 0.40 {
                area_id += 1;
                let class = *LANDUSE.choose(&mut rng).expect("non-empty");
                let inner = block.inset(0.15);
                area.push(feature(area_id, Some(class), "", inner.polygon()));
                if class == "recreation ground" && rng.random_bool(0.5) {
                    point_id += 1;
                    let (lon, lat) = inner.inset(0.2).random_point(&mut rng);
                    let name = format!("Kinderhaus {street}");
                    points.push(feature(point_id, Some("kindergarten"), &name, point(round6(lon), round6(lat))));
                }
            }

            let n_buildings = rng.random_range(1..=2);
            for _ in 0..n_buildings {
                building_id += 1;
                let name = if rng.random_bool(0.1) { building_names.next().copied().unwrap_or("") } else { "" };
                let geom = block.inset(0.05).random_rect(&mut rng, (0.0002, 0.0006), (0.00015, 0.0004));
                buildings.push(feature(building_id, None, name, geom));
            }

            let (class, prefix) = *POINT_CLASSES.choose(&mut rng).expect("non-empty");
            point_id += 1;
            let name = if rng.random_bool(0.6) { format!("{prefix} {street}") } else { String::new() };
            let (lon, lat) = block.inset(0.05).random_point(&mut rng);
            points.push(feature(point_id, Some(class), &name, point(round6(lon), round6(lat))));
        }
    }

    vec![
        CityLayer { database: "soil", table: "soil", collection: collection(soil) },
        CityLayer { database: "roads", table: "roads", collection: collection(roads) },
        CityLayer { database: "points", table: "points", collection: collection(points) },
        CityLayer { database: "land", table: "area", collection: collection(area) },
        CityLayer { database: "buildings", table: "buildings", collection: collection(buildings) },
    ]
}

/// Ingests the synthetic city into `store`.
pub fn load_city(store: &KnowledgeStore, seed: u64) -> Result<Vec<IngestReport>, StoreError> {
    synthetic_city(seed)
        .iter()
        .map(|l| store.ingest_geojson(l.database, Some(l.table), &l.collection))
        .collect()
}

/// A store holding the fixture city under the trigram embedder.
pub fn city_store() -> Arc<KnowledgeStore> {
    let store = KnowledgeStore::new(Arc::new(TrigramEmbedder));
    load_city(&store, CITY_SEED).expect("fixture city ingests");
    Arc::new(store)
}

pub fn geocoder() -> FixtureGeocoder {
    FixtureGeocoder::from_json(GEOCODER_JSON).expect("fixture geocoder parses")
}

pub fn transcript() -> Result<Transcript, TranscriptError> {
    Transcript::from_json(TRANSCRIPTS_JSON, "fixtures/transcripts.json")
}

/// An engine over the fixture city answering from `transcript`.
pub fn engine_with(store: Arc<KnowledgeStore>, transcript: Transcript) -> Engine {
    let gateway = Gateway::new(Arc::new(ScriptedBackend::new(transcript)), RetryPolicy::none());
    Engine::new(Arc::new(gateway), store, Box::new(geocoder()), EngineConfig::default())
}

/// The fully offline engine: fixture city, fixture geocoder, fixture transcripts.
pub fn engine() -> Engine {
    engine_with(city_store(), transcript().expect("fixture transcripts parse"))
}
