//! Multi-source synthetic domain whose attributes have distinct value formats.
//!
//! Each source renders every attribute in its own style (source `i` uses
//! style `i % 3`), which mimics how different web sites format the same field.

use std::str::FromStr;

use super::AttributeRecord;
use crate::error::{Error, Result};
use crate::numerics::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SyntheticAttribute {
    Price,
    Time,
    Color,
    Vin,
    Make,
    Mileage,
    Date,
    Phone,
}

impl SyntheticAttribute {
    pub const ALL: [SyntheticAttribute; 8] = [
        SyntheticAttribute::Price,
        SyntheticAttribute::Time,
        SyntheticAttribute::Color,
        SyntheticAttribute::Vin,
        SyntheticAttribute::Make,
        SyntheticAttribute::Mileage,
        SyntheticAttribute::Date,
        SyntheticAttribute::Phone,
    ];

    /// The five-attribute default domain.
    pub const DEFAULT: [SyntheticAttribute; 5] = [
        SyntheticAttribute::Price,
        SyntheticAttribute::Time,
        SyntheticAttribute::Color,
        SyntheticAttribute::Vin,
        SyntheticAttribute::Make,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SyntheticAttribute::Price => "price",
            SyntheticAttribute::Time => "time",
            SyntheticAttribute::Color => "color",
            SyntheticAttribute::Vin => "vin",
            SyntheticAttribute::Make => "make",
            SyntheticAttribute::Mileage => "mileage",
            SyntheticAttribute::Date => "date",
            SyntheticAttribute::Phone => "phone",
        }
    }

    fn render(self, style: usize, rng: &mut Rng) -> String {
        match self {
            SyntheticAttribute::Price => {
                let dollars = 2_000 + rng.below(58_000);
                match style {
                    0 => format!("${}", thousands(dollars)),
                    1 => format!("${}.{:02}", thousands(dollars), rng.below(100)),
                    _ => format!("$ {dollars}"),
                }
            }
            SyntheticAttribute::Time => {
                let hour = rng.below(24);
                let minute = rng.below(60);
                let (h12, ampm) = match hour {
                    0 => (12, "am"),
                    1..=11 => (hour, "am"),
                    12 => (12, "pm"),
                    _ => (hour - 12, "pm"),
                };
                let zone = *rng.choose(&["EDT", "EST", "PDT", "CST"]);
                match style {
                    0 => format!("{h12}:{minute:02} {ampm} {zone}"),
                    1 => format!("{h12}:{minute:02} {}", ampm.to_uppercase()),
                    _ => format!("{hour:02}:{minute:02} hrs {zone}"),
                }
            }
            SyntheticAttribute::Color => {
                let base = *rng.choose(COLORS);
                match style {
                    0 => base.to_string(),
                    1 => base.to_lowercase(),
                    _ => format!("{} {base}", rng.choose(COLOR_MODIFIERS)),
                }
            }
            SyntheticAttribute::Vin => {
                let body: String = (0..14).map(|_| *rng.choose(VIN_CHARS)).collect();
                let wmi = *rng.choose(WMI);
                match style {
                    0 => format!("{wmi}{body}"),
                    1 => format!("VIN {wmi}{body}"),
                    _ => format!("{wmi}-{body}"),
                }
            }
            SyntheticAttribute::Make => {
                let make = *rng.choose(MAKES);
                match style {
                    0 => make.to_string(),
                    1 => make.to_uppercase(),
                    _ => format!("{make} {}", rng.choose(MODELS)),
                }
            }
            SyntheticAttribute::Mileage => {
                let miles = rng.below(150_000);
                match style {
                    0 => format!("{} mi.", thousands(miles)),
                    1 => format!("{miles} miles"),
                    _ => format!("{}K mi", miles / 1000),
                }
            }
            SyntheticAttribute::Date => {
                let (y, m, d) = (2005 + rng.below(15), 1 + rng.below(12), 1 + rng.below(28));
                match style {
                    0 => format!("{m:02}/{d:02}/{y}"),
                    1 => format!("{y}-{m:02}-{d:02}"),
                    _ => format!("{} {d}, {y}", MONTHS[m - 1]),
                }
            }
            SyntheticAttribute::Phone => {
                let (a, b, c) = (200 + rng.below(800), 200 + rng.below(800), rng.below(10_000));
                match style {
                    0 => format!("({a}) {b}-{c:04}"),
                    1 => format!("{a}-{b}-{c:04}"),
                    _ => format!("{a}.{b}.{c:04}"),
                }
            }
        }
    }
}

impl FromStr for SyntheticAttribute {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SyntheticAttribute::ALL
            .into_iter()
            .find(|a| a.name() == s.trim())
            .ok_or_else(|| Error::arg(format!("unknown synthetic attribute {s:?}")))
    }
}

const COLORS: &[&str] = &[
    "Black", "White", "Silver", "Gray", "Red", "Blue", "Green", "Beige", "Brown", "Gold",
    "Orange", "Maroon",
];
const COLOR_MODIFIERS: &[&str] = &["Metallic", "Pearl", "Midnight", "Dark", "Light"];
const MAKES: &[&str] = &[
    "Toyota", "Honda", "Ford", "Chevrolet", "Nissan", "Hyundai", "Kia", "Subaru", "Mazda",
    "Volkswagen", "BMW", "Audi", "Lexus", "Jeep", "Dodge",
];
const MODELS: &[&str] = &["Sedan", "Coupe", "SUV", "Hatchback", "Wagon", "Pickup"];
const WMI: &[&str] = &["1HG", "JTD", "WBA", "1FA", "KMH", "3VW", "5YJ", "2T1"];
const VIN_CHARS: &[char] = &[
    '0', '1', '2', '3', '4', '5', '6', '7', '8', '9', 'A', 'B', 'C', 'D', 'E', 'F', 'G', 'H', 'J',
    'K', 'L', 'M', 'N', 'P', 'R', 'S', 'T', 'U', 'V', 'W', 'X', 'Y', 'Z',
];
const MONTHS: &[&str] = &[
    "Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec",
];

fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

#[derive(Clone, Debug)]
pub struct SyntheticConfig {
    pub sources: usize,
    pub attributes: Vec<SyntheticAttribute>,
    pub records_per_source: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            sources: 3,
            attributes: SyntheticAttribute::DEFAULT.to_vec(),
            records_per_source: 200,
            seed: 42,
        }
    }
}

const STYLES: usize = 3;
/// Share of a source's values rendered in its own house format; the rest
/// pick any format uniformly.
const HOUSE_STYLE_RATE: f64 = 0.6;

/// Generates `sources × records_per_source` records. Attributes are assigned
/// round-robin inside a source, so every source covers every attribute evenly.
pub fn generate(cfg: &SyntheticConfig) -> Result<Vec<AttributeRecord>> {
    if cfg.sources == 0 || cfg.attributes.is_empty() || cfg.records_per_source == 0 {
        return Err(Error::arg(
            "synthetic generator needs at least one source, attribute and record",
        ));
    }
    let mut out = Vec::with_capacity(cfg.sources * cfg.records_per_source);
    for s in 0..cfg.sources {
        let mut rng = Rng::derived(cfg.seed, s as u64);
        let source = format!("site{}", s + 1);
        let house = s % STYLES;
        for i in 0..cfg.records_per_source {
            let attr = cfg.attributes[i % cfg.attributes.len()];
            let style = if rng.bernoulli(HOUSE_STYLE_RATE) { house } else { rng.below(STYLES) };
            out.push(AttributeRecord::new(
                source.clone(),
                attr.name(),
                attr.render(style, &mut rng),
            ));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn default_shape() {
        let recs = generate(&SyntheticConfig::default()).unwrap();
        assert_eq!(recs.len(), 600);
        let sources: BTreeSet<_> = recs.iter().map(|r| r.source.as_str()).collect();
        assert_eq!(sources.len(), 3);
        for attr in SyntheticAttribute::DEFAULT {
            let n = recs.iter().filter(|r| r.attribute == attr.name()).count();
            assert_eq!(n, 120);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&SyntheticConfig::default()).unwrap();
        let b = generate(&SyntheticConfig::default()).unwrap();
        assert_eq!(a, b);
        let c = generate(&SyntheticConfig {
            seed: 43,
            ..Default::default()
        })
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn thousands_separator() {
        assert_eq!(thousands(5), "5");
        assert_eq!(thousands(12345), "12,345");
        assert_eq!(thousands(123456), "123,456");
        assert_eq!(thousands(1234567), "1,234,567");
    }

    #[test]
    fn attribute_names_parse() {
        for a in SyntheticAttribute::ALL {
            assert_eq!(a.name().parse::<SyntheticAttribute>().unwrap(), a);
        }
        assert!("nope".parse::<SyntheticAttribute>().is_err());
    }

    #[test]
    fn sources_differ_in_style() {
        let recs = generate(&SyntheticConfig::default()).unwrap();
        let vin1 = recs.iter().find(|r| r.source == "site2" && r.attribute == "vin").unwrap();
        assert!(vin1.value.starts_with("VIN "));
    }
}
