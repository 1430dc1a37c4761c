use serde::{Deserialize, Serialize};

use super::FlashError;

/// Physical layout of a simulated NAND chip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub blocks_per_chip: u32,
    pub pages_per_block: u32,
    pub data_bytes_per_page: u32,
    pub spare_bytes_per_page: u32,
}

impl Geometry {
    /// A full MLC part: 4096 blocks of 256 pages, 4096 data + 224 spare bytes.
    pub const FULL_SCALE: Geometry = Geometry {
        blocks_per_chip: 4096,
        pages_per_block: 256,
        data_bytes_per_page: 4096,
        spare_bytes_per_page: 224,
    };

    /// The desk-scale default used by the CLI and the acceptance suite.
    pub const DESK_SCALE: Geometry = Geometry {
        blocks_per_chip: 64,
        pages_per_block: 64,
        data_bytes_per_page: 4096,
        spare_bytes_per_page: 224,
    };

    pub fn validate(&self) -> Result<(), FlashError> {
        let counts = [
            ("blocks_per_chip", self.blocks_per_chip),
            ("pages_per_block", self.pages_per_block),
            ("data_bytes_per_page", self.data_bytes_per_page),
            ("spare_bytes_per_page", self.spare_bytes_per_page),
        ];
        for (name, value) in counts {
            if value == 0 {
                return Err(FlashError::Config(format!("{name} must be at least 1")));
            }
        }
        // Byte locations travel as u16 on the wire.
        if self.data_bytes_per_page > 1 << 16 {
            return Err(FlashError::Config(
                "data_bytes_per_page must not exceed 65536".into(),
            ));
        }
        Ok(())
    }

    pub fn bits_per_page(&self) -> usize {
        self.data_bytes_per_page as usize * 8
    }

    pub fn total_pages(&self) -> u64 {
        u64::from(self.blocks_per_chip) * u64::from(self.pages_per_block)
    }

    /// The block reserved for interrupt calibration.
    pub fn scratch_block(&self) -> u32 {
        self.blocks_per_chip - 1
    }

    pub fn check_block(&self, block: u32) -> Result<(), FlashError> {
        if block >= self.blocks_per_chip {
            return Err(FlashError::Address { block, page: None });
        }
        Ok(())
    }

    pub fn check_page(&self, block: u32, page: u32) -> Result<(), FlashError> {
        if block >= self.blocks_per_chip || page >= self.pages_per_block {
            return Err(FlashError::Address {
                block,
                page: Some(page),
            });
        }
        Ok(())
    }

    pub(crate) fn linear_page(&self, block: u32, page: u32) -> u64 {
        u64::from(block) * u64::from(self.pages_per_block) + u64::from(page)
    }
}

impl Default for Geometry {
    fn default() -> Self {
        Self::DESK_SCALE
    }
}
