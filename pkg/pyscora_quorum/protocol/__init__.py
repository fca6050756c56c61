from .party import Party, party_of
from .buyer import Buyer, BuyerPhase, BuyerPayment, BuyerSettlement
from .seller import Seller, SellerPhase, SellerPayment, SellerSettlement
from .validator import Validator, BuyerSettlementState, SellerSettleRequest

__all__ = [
    'Party',
    'party_of',
    'Buyer',
    'BuyerPhase',
    'BuyerPayment',
    'BuyerSettlement',
    'Seller',
    'SellerPhase',
    'SellerPayment',
    'SellerSettlement',
    'Validator',
    'BuyerSettlementState',
    'SellerSettleRequest',
]
